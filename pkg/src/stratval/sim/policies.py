"""Built-in agent behaviour policies.

Policies are deliberately small and parametric: the protocol specifies
incentives, not behaviour, so every behavioural knob (signal noise,
laziness, adversarial share, searcher accuracy, challenge propensity) is a
scenario parameter. Policies only ever see redacted strategy views plus
engine-supplied private signals; the latent quality and the audit stream
are out of reach by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import RedactedStrategy
from ..markets import Side


@dataclass(frozen=True)
class VerifierPolicy:
    """Votes from a noisy private signal of strategy quality; may be lazy."""

    noise: float
    stake: int  # micro-units per vote
    truth_threshold: float
    lazy: bool = False
    abstain_probability: float = 0.0

    def observe(self, true_quality: float, rng: np.random.Generator) -> float:
        """Engine-side signal generation: quality plus Gaussian noise."""
        return true_quality + self.noise * float(rng.standard_normal())

    def decide_vote(
        self, view: RedactedStrategy, signal: float, rng: np.random.Generator
    ) -> tuple[Side, int] | None:
        if self.lazy and rng.random() < self.abstain_probability:
            return None
        side = Side.AGREE if signal > self.truth_threshold else Side.DISAGREE
        return side, self.stake


@dataclass(frozen=True)
class ProposerPolicy:
    """Submits candidate strategies; adversarial ones fake their metrics."""

    adversarial: bool
    submit_probability: float
    quality_low: float
    quality_high: float
    metrics_noise: float
    complexity_low: float
    complexity_high: float
    metric_dims: int = 4

    def maybe_submit(self, rng: np.random.Generator) -> tuple[float, tuple[float, ...], float] | None:
        """Returns (true_quality, metrics_profile, complexity) or None."""
        if rng.random() >= self.submit_probability:
            return None
        quality = float(rng.uniform(self.quality_low, self.quality_high))
        if self.adversarial:
            # inflated metrics: pass filters while the latent quality is poor
            metrics = tuple(float(rng.uniform(0.7, 1.0)) for _ in range(self.metric_dims))
        else:
            metrics = tuple(
                float(np.clip(quality + self.metrics_noise * rng.standard_normal(), 0.0, 1.0))
                for _ in range(self.metric_dims)
            )
        complexity = float(rng.uniform(self.complexity_low, self.complexity_high))
        return quality, metrics, complexity


@dataclass(frozen=True)
class DeepSearcherPolicy:
    """Resolves escalated markets to the investigated truth with given accuracy."""

    accuracy: float

    def resolve(self, truth: Side, rng: np.random.Generator) -> Side:
        if rng.random() < self.accuracy:
            return truth
        return truth.other()


@dataclass(frozen=True)
class ArbitratorPolicy:
    """Challenges deep-searcher rulings that contradict its own audit draw."""

    accuracy: float
    challenge_propensity: float

    def conclusion(self, truth: Side, rng: np.random.Generator) -> Side:
        if rng.random() < self.accuracy:
            return truth
        return truth.other()

    def should_challenge(
        self, conclusion: Side, resolved_outcome: Side, rng: np.random.Generator
    ) -> bool:
        if conclusion is resolved_outcome:
            return False
        return rng.random() < self.challenge_propensity
