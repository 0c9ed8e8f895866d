"""Stochastic audit lottery: Poisson-scheduled spot checks on strategies.

Audits arrive as a rate-``lam`` Poisson process per strategy, sampled as
exponential inter-arrival times on a dedicated RNG stream. The probability
that a strategy goes unaudited for an elapsed time ``dt`` is exp(-lam*dt),
so evasion gets exponentially unlikely for dormant strategies. Each executed
audit draws a flat gas fee plus a reward proportional to the strategy's
current allocation from the lottery pool; an underfunded pool skips the
audit and reports starvation (a measurable failure mode, not an exception).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from .core import ProtocolError
from .fixedpoint import prorate


class AuditError(ProtocolError):
    pass


class AuditOutcome(str, Enum):
    CLEAN = "clean"
    FRAUD_DETECTED = "fraud_detected"
    STARVED = "starved"


@dataclass
class AuditSchedule:
    """Audit parameters; the lottery pool balance itself lives in the ledger."""

    rate: float  # audits per epoch, > 0
    gas_fee: int  # micro-units per audit
    reward_coeff: float  # reward = reward_coeff * allocation
    last_audit_epoch: dict[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.rate <= 0:
            raise AuditError("audit rate must be > 0")
        if self.gas_fee < 0:
            raise AuditError("gas_fee must be >= 0")
        if self.reward_coeff < 0:
            raise AuditError("reward_coeff must be >= 0")
        if self.reward_coeff >= 0.1:
            warnings.warn(
                f"audit reward_coeff {self.reward_coeff} is large; expected fee+reward "
                "should be small relative to the audited allocation",
                stacklevel=2,
            )


def audit_probability(rate: float, elapsed: float) -> float:
    """Probability of at least one audit in ``elapsed`` epochs: 1 - exp(-rate*elapsed)."""
    if rate <= 0:
        raise AuditError("rate must be > 0")
    if elapsed < 0:
        raise AuditError("elapsed must be >= 0")
    return 1.0 - math.exp(-rate * elapsed)


def sample_audit_events(rng: np.random.Generator, rate: float, horizon: float) -> list[float]:
    """Event times of a Poisson process of ``rate`` on (0, horizon].

    Exponential inter-arrival times via inverse CDF on the given stream;
    identical seeds give identical event lists.
    """
    if rate <= 0:
        raise AuditError("rate must be > 0")
    if horizon <= 0:
        raise AuditError("horizon must be > 0")
    times: list[float] = []
    t = 0.0
    while True:
        u = rng.random()
        t += -math.log1p(-u) / rate
        if t > horizon:
            return times
        times.append(t)


@dataclass(frozen=True)
class AuditResult:
    outcome: AuditOutcome
    gas: int
    reward_total: int
    rewards: dict[str, int]  # verifier id -> micro-units


def run_audit(
    strategy_id: str,
    true_quality: float,
    verifiers: Sequence[str],
    is_fraud: Callable[[float], bool],
    *,
    schedule: AuditSchedule,
    pool_balance: int,
    allocation: int,
    detection_accuracy: float,
    rng: np.random.Generator,
    epoch: int,
) -> AuditResult:
    """Execute one audit draw against a strategy.

    Requires at least one eligible verifier; deducts gas + reward from the
    lottery pool (the caller applies the ledger moves), splits the reward
    equally across the eligible verifiers, and queries the ground-truth
    oracle: a fraudulent strategy is flagged with probability
    ``detection_accuracy``, a clean one never is.
    """
    if not verifiers:
        raise AuditError("run_audit requires at least one eligible verifier")
    reward_total = int(allocation * schedule.reward_coeff)
    cost = schedule.gas_fee + reward_total
    if pool_balance < cost:
        return AuditResult(AuditOutcome.STARVED, 0, 0, {})
    rewards: dict[str, int] = {}
    if reward_total:
        split = prorate(reward_total, [1] * len(verifiers))
        rewards = {v: amt for v, amt in zip(verifiers, split) if amt}
    fraudulent = is_fraud(true_quality)
    detected = fraudulent and rng.random() < detection_accuracy
    schedule.last_audit_epoch[strategy_id] = epoch
    outcome = AuditOutcome.FRAUD_DETECTED if detected else AuditOutcome.CLEAN
    return AuditResult(outcome, schedule.gas_fee, reward_total, rewards)
