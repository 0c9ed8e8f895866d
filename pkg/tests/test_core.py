import pytest

from stratval.core import (
    AgentId,
    Comparison,
    DecisionCriteria,
    EpochClock,
    Goal,
    IntentionSpec,
    Phase,
    Predicate,
    PredicateError,
    Role,
    StrategyProposal,
    advance_epoch,
    evaluate_predicate,
    filter_strategies,
)


def make_strategy(sid, metrics, quality=0.5):
    return StrategyProposal(
        strategy_id=sid,
        proposer=AgentId("p1", Role.PROPOSER),
        collateral=100_000_000,
        complexity=1.0,
        metrics_profile=tuple(metrics),
        true_quality=quality,
    )


def make_intention(predicates=()):
    return IntentionSpec(
        intention_id="i1",
        owner=AgentId("o1", Role.CAPITAL_OWNER),
        predicates=tuple(predicates),
        metric_index=0,
        goal=Goal.MAXIMIZE,
        readjust_every=5,
        decision_criteria=DecisionCriteria(majority_threshold=0.7),
        deposit=1_000_000_000,
        alpha_burn=10_000_000,
    )


class TestPredicates:
    def test_strict_less_than_holds(self):
        p = Predicate(0, Comparison.LT, 0.05)
        assert evaluate_predicate(p, (0.03, 0.2)) is True

    def test_strict_less_than_boundary_fails(self):
        p = Predicate(0, Comparison.LT, 0.05)
        assert evaluate_predicate(p, (0.05, 0.2)) is False

    def test_ge_boundary_inclusive(self):
        p = Predicate(1, Comparison.GE, 0.10)
        assert evaluate_predicate(p, (0.0, 0.10)) is True

    @pytest.mark.parametrize(
        "op,value,expected",
        [
            (Comparison.LE, 0.05, True),
            (Comparison.LE, 0.051, False),
            (Comparison.GT, 0.05, False),
            (Comparison.GT, 0.0501, True),
        ],
    )
    def test_remaining_comparisons(self, op, value, expected):
        p = Predicate(0, op, 0.05)
        assert evaluate_predicate(p, (value,)) is expected

    def test_out_of_range_index_is_structural_error(self):
        p = Predicate(3, Comparison.LT, 0.5)
        with pytest.raises(PredicateError):
            evaluate_predicate(p, (0.1, 0.2))


class TestFilterStrategies:
    def test_keeps_matching_in_input_order(self):
        intent = make_intention([Predicate(0, Comparison.GE, 0.5)])
        strategies = [
            make_strategy("s1", [0.6, 0.0]),
            make_strategy("s2", [0.4, 0.0]),
            make_strategy("s3", [0.9, 0.0]),
        ]
        assert filter_strategies(intent, strategies) == ["s1", "s3"]

    def test_empty_predicates_pass_everything(self):
        intent = make_intention([])
        strategies = [make_strategy("s1", [0.1]), make_strategy("s2", [0.2])]
        assert filter_strategies(intent, strategies) == ["s1", "s2"]

    def test_all_fail_gives_empty(self):
        intent = make_intention([Predicate(0, Comparison.GT, 1.0)])
        strategies = [make_strategy("s1", [0.1]), make_strategy("s2", [0.2])]
        assert filter_strategies(intent, strategies) == []

    def test_idempotent(self):
        intent = make_intention([Predicate(0, Comparison.GE, 0.5)])
        strategies = [make_strategy("s1", [0.6]), make_strategy("s2", [0.4])]
        once = filter_strategies(intent, strategies)
        again = filter_strategies(intent, [s for s in strategies if s.strategy_id in once])
        assert once == again


class TestEpochClock:
    def make_clock(self):
        return EpochClock(
            interval_lengths={
                Phase.PROPOSAL: 2,
                Phase.ASSESSMENT: 3,
                Phase.REBALANCING: 1,
                Phase.WITHDRAWAL: 1,
            }
        )

    def test_stays_in_phase_until_interval_exhausted(self):
        clock = self.make_clock()
        clock = advance_epoch(clock)
        assert (clock.epoch, clock.phase) == (1, Phase.PROPOSAL)

    def test_boundary_transition(self):
        clock = advance_epoch(self.make_clock())
        clock = advance_epoch(clock)
        assert (clock.epoch, clock.phase) == (2, Phase.ASSESSMENT)

    def test_cycle_wraps_to_proposal(self):
        clock = self.make_clock()
        for _ in range(7):
            clock = advance_epoch(clock)
        assert (clock.epoch, clock.phase) == (7, Phase.PROPOSAL)

    def test_phase_sequence_is_prefix_of_cycle(self):
        clock = self.make_clock()
        seen = [clock.phase]
        for _ in range(30):
            clock = advance_epoch(clock)
            seen.append(clock.phase)
        expected = []
        order = [Phase.PROPOSAL, Phase.ASSESSMENT, Phase.REBALANCING, Phase.WITHDRAWAL]
        lengths = [2, 3, 1, 1]
        while len(expected) < len(seen):
            for ph, ln in zip(order, lengths):
                expected.extend([ph] * ln)
        assert seen == expected[: len(seen)]

    def test_interval_lengths_must_be_positive(self):
        with pytest.raises(ValueError):
            EpochClock(interval_lengths={p: 0 for p in Phase})


class TestInvariants:
    def test_redacted_view_has_no_quality(self):
        s = make_strategy("s1", [0.5], quality=0.9)
        view = s.redacted()
        assert not hasattr(view, "true_quality")

    def test_decision_criteria_threshold_range(self):
        with pytest.raises(ValueError):
            DecisionCriteria(majority_threshold=0.5)
        with pytest.raises(ValueError):
            DecisionCriteria(majority_threshold=1.01)

    def test_intention_requires_positive_deposit_and_burn(self):
        with pytest.raises(ValueError):
            IntentionSpec(
                intention_id="i",
                owner=AgentId("o", Role.CAPITAL_OWNER),
                predicates=(),
                metric_index=0,
                goal=Goal.MAXIMIZE,
                readjust_every=1,
                decision_criteria=DecisionCriteria(majority_threshold=0.7),
                deposit=0,
                alpha_burn=1,
            )
