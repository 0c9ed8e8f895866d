"""Shared domain types: agents, the epoch clock, strategies and intentions.

The epoch clock cycles through four non-overlapping phases
(Proposal -> Assessment -> Rebalancing -> Withdrawal). Intentions declare
threshold predicates over strategy metric vectors plus a metric/goal pair,
a re-evaluation cadence and decision-override criteria; strategies carry a
latent ``true_quality`` that only the outcome sampler and the audit oracle
may read. Agent decision policies receive :class:`RedactedStrategy` views
so that boundary is structural, not a convention.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Sequence


class ProtocolError(Exception):
    """Base class for all protocol-rule violations."""


class PredicateError(ProtocolError):
    """Structurally invalid predicate evaluation (e.g. metric index out of range)."""


class Role(str, Enum):
    CAPITAL_OWNER = "capital_owner"
    PROPOSER = "proposer"
    VERIFIER = "verifier"
    DEEP_SEARCHER = "deep_searcher"
    ARBITRATOR = "arbitrator"


@dataclass(frozen=True)
class AgentId:
    """Opaque unique identifier plus a role fixed at creation."""

    id: str
    role: Role


class Phase(str, Enum):
    PROPOSAL = "proposal"
    ASSESSMENT = "assessment"
    REBALANCING = "rebalancing"
    WITHDRAWAL = "withdrawal"


PHASE_ORDER = (Phase.PROPOSAL, Phase.ASSESSMENT, Phase.REBALANCING, Phase.WITHDRAWAL)


@dataclass(frozen=True)
class EpochClock:
    """Discrete clock: strictly increasing epoch, phases cycling in fixed order.

    ``phase_elapsed`` counts completed epochs of the current phase; the phase
    rolls over once it reaches the configured interval length.
    """

    interval_lengths: dict[Phase, int]
    epoch: int = 0
    phase: Phase = Phase.PROPOSAL
    phase_elapsed: int = 0

    def __post_init__(self) -> None:
        for p in PHASE_ORDER:
            if self.interval_lengths.get(p, 0) < 1:
                raise ValueError(f"interval length for {p.value} must be >= 1")

    @property
    def phase_ends_now(self) -> bool:
        """True when the current epoch is the last one of its phase."""
        return self.phase_elapsed == self.interval_lengths[self.phase] - 1

    @property
    def phase_starts_now(self) -> bool:
        return self.phase_elapsed == 0


def advance_epoch(clock: EpochClock) -> EpochClock:
    """Advance the clock by one epoch, rolling the phase when its interval ends."""
    elapsed = clock.phase_elapsed + 1
    phase = clock.phase
    if elapsed >= clock.interval_lengths[phase]:
        phase = PHASE_ORDER[(PHASE_ORDER.index(phase) + 1) % len(PHASE_ORDER)]
        elapsed = 0
    return replace(clock, epoch=clock.epoch + 1, phase=phase, phase_elapsed=elapsed)


class Comparison(str, Enum):
    LT = "<"
    LE = "<="
    GT = ">"
    GE = ">="


@dataclass(frozen=True)
class Predicate:
    """Single-metric threshold rule: ``metric[index] <op> threshold``."""

    metric_index: int
    op: Comparison
    threshold: float

    def __str__(self) -> str:
        return f"metric[{self.metric_index}] {self.op.value} {self.threshold}"


def evaluate_predicate(predicate: Predicate, metrics: Sequence[float]) -> bool:
    """Evaluate a threshold predicate against a metric vector. Pure.

    Comparisons are strict for < and >, inclusive for <= and >=.
    """
    if predicate.metric_index < 0 or predicate.metric_index >= len(metrics):
        raise PredicateError(
            f"metric index {predicate.metric_index} out of range for vector of length {len(metrics)}"
        )
    value = metrics[predicate.metric_index]
    if predicate.op is Comparison.LT:
        return value < predicate.threshold
    if predicate.op is Comparison.LE:
        return value <= predicate.threshold
    if predicate.op is Comparison.GT:
        return value > predicate.threshold
    return value >= predicate.threshold


class Goal(str, Enum):
    MAXIMIZE = "maximize"
    MINIMIZE = "minimize"


@dataclass(frozen=True)
class DecisionCriteria:
    """Decision-override criteria attached to an intention.

    ``majority_threshold`` is the stake-share a side must reach for the
    community vote to resolve the market on its own; an optional divergence
    tolerance escalates noisy markets and ``require_deep_searcher`` forces
    escalation regardless of the vote.
    """

    majority_threshold: float
    divergence_tolerance: float | None = None
    require_deep_searcher: bool = False

    def __post_init__(self) -> None:
        if not (0.5 < self.majority_threshold <= 1.0):
            raise ValueError("majority_threshold must be in (0.5, 1]")
        if self.divergence_tolerance is not None and self.divergence_tolerance < 0:
            raise ValueError("divergence_tolerance must be >= 0")


@dataclass(frozen=True)
class RedactedStrategy:
    """Strategy view handed to agent policies: no latent quality field."""

    strategy_id: str
    proposer_id: str
    collateral: int
    complexity: float
    metrics_profile: tuple[float, ...]


@dataclass
class StrategyProposal:
    """A candidate strategy with collateral and a latent ground-truth quality.

    ``true_quality`` parameterises both claim resolution and the return
    sampler; it must never be read by agent decision policies (they get
    :meth:`redacted` views only).
    """

    strategy_id: str
    proposer: AgentId
    collateral: int  # micro-units, >= configured c_min at listing
    complexity: float
    metrics_profile: tuple[float, ...]
    true_quality: float
    linked_intentions: set[str] = field(default_factory=set)
    listed_epoch: int = 0

    def __post_init__(self) -> None:
        if self.complexity <= 0:
            raise ValueError("complexity must be > 0")
        if not (0.0 <= self.true_quality <= 1.0):
            raise ValueError("true_quality must be in [0, 1]")
        if self.collateral < 0:
            raise ValueError("collateral must be >= 0")

    def redacted(self) -> RedactedStrategy:
        return RedactedStrategy(
            strategy_id=self.strategy_id,
            proposer_id=self.proposer.id,
            collateral=self.collateral,
            complexity=self.complexity,
            metrics_profile=self.metrics_profile,
        )


@dataclass
class IntentionSpec:
    """A capital owner's declared objective tuple.

    Holds the filtering predicates, the primary metric index and goal
    direction, the re-evaluation cadence in epochs, the decision-override
    criteria, the deposited capital and the reputation burn paid at creation.
    """

    intention_id: str
    owner: AgentId
    predicates: tuple[Predicate, ...]
    metric_index: int
    goal: Goal
    readjust_every: int
    decision_criteria: DecisionCriteria
    deposit: int  # micro-units
    alpha_burn: int  # micro-units

    def __post_init__(self) -> None:
        if self.readjust_every < 1:
            raise ValueError("readjust_every must be >= 1")
        if self.deposit <= 0:
            raise ValueError("deposit must be > 0")
        if self.alpha_burn <= 0:
            raise ValueError("alpha_burn must be > 0")


def filter_strategies(
    intention: IntentionSpec, strategies: Sequence[StrategyProposal]
) -> list[str]:
    """Return ids of strategies whose metrics satisfy every predicate, in order.

    An empty predicate list is a vacuous conjunction: everything passes.
    """
    out = []
    for s in strategies:
        if all(evaluate_predicate(p, s.metrics_profile) for p in intention.predicates):
            out.append(s.strategy_id)
    return out
