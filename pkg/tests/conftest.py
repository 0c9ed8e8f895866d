import pytest

from stratval.core import (
    AgentId,
    Comparison,
    DecisionCriteria,
    Goal,
    IntentionSpec,
    Predicate,
    Role,
    StrategyProposal,
)
from stratval.fixedpoint import MICRO
from stratval.tokens import DualLedger, Token

OWNER = AgentId("own1", Role.CAPITAL_OWNER)
PROPOSER = AgentId("prop1", Role.PROPOSER)
VERIFIERS = [AgentId(f"ver{i}", Role.VERIFIER) for i in range(1, 6)]
SEARCHER = AgentId("deep1", Role.DEEP_SEARCHER)
ARBITRATOR = AgentId("arb1", Role.ARBITRATOR)


def build_ledger() -> DualLedger:
    led = DualLedger()
    led.genesis(OWNER.id, 5000 * MICRO, 100 * MICRO)
    led.genesis(PROPOSER.id, 1000 * MICRO, 0)
    for v in VERIFIERS:
        led.genesis(v.id, 2000 * MICRO, 10 * MICRO)
    led.genesis(SEARCHER.id, 100 * MICRO, 200 * MICRO)
    led.genesis(ARBITRATOR.id, 100 * MICRO, 200 * MICRO)
    led.burn_alpha(OWNER.id, 10 * MICRO)  # intention creation burn
    led.escrow(OWNER.id, Token.SUPRA, 1000 * MICRO)  # intention deposit
    return led


def build_strategy(quality: float = 0.8, metrics=(0.8, 0.1, 0.05, 0.9)) -> StrategyProposal:
    return StrategyProposal(
        strategy_id="s1",
        proposer=PROPOSER,
        collateral=100 * MICRO,
        complexity=1.0,
        metrics_profile=tuple(metrics),
        true_quality=quality,
    )


def build_intention(
    threshold: float = 0.7,
    predicates: tuple = (),
    require_deep_searcher: bool = False,
    divergence_tolerance: float | None = None,
) -> IntentionSpec:
    return IntentionSpec(
        intention_id="i1",
        owner=OWNER,
        predicates=predicates,
        metric_index=0,
        goal=Goal.MAXIMIZE,
        readjust_every=5,
        decision_criteria=DecisionCriteria(
            majority_threshold=threshold,
            divergence_tolerance=divergence_tolerance,
            require_deep_searcher=require_deep_searcher,
        ),
        deposit=1000 * MICRO,
        alpha_burn=10 * MICRO,
    )


@pytest.fixture
def ledger():
    return build_ledger()


@pytest.fixture
def strategy():
    return build_strategy()


@pytest.fixture
def intention():
    return build_intention()


FAILING_PREDICATE = Predicate(0, Comparison.GE, 0.99)
