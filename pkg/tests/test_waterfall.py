import pytest

from conftest import (
    ARBITRATOR,
    FAILING_PREDICATE,
    PROPOSER,
    SEARCHER,
    VERIFIERS,
    build_intention,
    build_strategy,
)
from stratval.core import Phase
from stratval.events import EventLog
from stratval.fixedpoint import MICRO
from stratval.markets import Side
from stratval.tokens import MARKET_ESCROW, SLASH_POOL, Token
from stratval.waterfall import (
    ALLOWED_TRANSITIONS,
    CriteriaStatus,
    InstanceState,
    ResolverKind,
    WaterfallError,
    arbitrator_challenge,
    cast_vote,
    check_decision_criteria,
    deep_searcher_resolve,
    open_validation,
    reopen_intention,
    resolve_by_criteria,
    settle_instance,
    settlement_due,
)

C_MIN = 100 * MICRO
R_MIN = 50 * MICRO


def open_instance(ledger, strategy=None, intention=None, log=None, stake=C_MIN):
    return open_validation(
        instance_id="v1",
        strategy=strategy or build_strategy(),
        intention=intention or build_intention(),
        proposer_stake=stake,
        c_min=C_MIN,
        mechanism="parimutuel",
        liquidity=100.0,
        ledger=ledger,
        epoch=0,
        log=log,
    )


def vote(instance, ledger, voter, side, amount, fee_ppm=0, epoch=2):
    cast_vote(
        instance, voter, side, amount,
        phase=Phase.ASSESSMENT, fee_rate_ppm=fee_ppm, ledger=ledger, epoch=epoch,
    )


class TestOpenValidation:
    def test_seed_stake_counts_as_initial_agree_total(self, ledger):
        instance = open_instance(ledger)
        assert instance.state is InstanceState.MARKET_OPEN
        assert instance.market.total_agree == C_MIN
        assert instance.market.stakes[(PROPOSER.id, Side.AGREE)] == C_MIN
        assert ledger.pool_balance(MARKET_ESCROW, Token.SUPRA) == C_MIN

    def test_stake_below_minimum_rejected(self, ledger):
        with pytest.raises(WaterfallError, match="frivolous"):
            open_instance(ledger, stake=C_MIN - 1)

    def test_predicate_failure_blocks_market_creation(self, ledger):
        intention = build_intention(predicates=(FAILING_PREDICATE,))
        before = ledger.state_dict()
        with pytest.raises(WaterfallError, match="predicate"):
            open_instance(ledger, intention=intention)
        assert ledger.state_dict() == before

    def test_lmsr_bond_must_cover_worst_case_subsidy(self, ledger):
        with pytest.raises(WaterfallError, match="bond"):
            open_validation(
                instance_id="v1", strategy=build_strategy(), intention=build_intention(),
                proposer_stake=C_MIN, c_min=C_MIN, mechanism="lmsr", liquidity=1000.0,
                ledger=ledger, epoch=0,
            )


class TestVoting:
    def test_vote_delegates_to_pool(self, ledger):
        instance = open_instance(ledger)
        vote(instance, ledger, VERIFIERS[0], Side.DISAGREE, 5 * MICRO)
        assert instance.market.total_disagree == 5 * MICRO

    def test_vote_outside_assessment_phase_rejected(self, ledger):
        instance = open_instance(ledger)
        with pytest.raises(WaterfallError, match="phase"):
            cast_vote(
                instance, VERIFIERS[0], Side.AGREE, MICRO,
                phase=Phase.PROPOSAL, fee_rate_ppm=0, ledger=ledger, epoch=1,
            )

    def test_vote_after_resolution_window_rejected(self, ledger):
        instance = open_instance(ledger)
        vote(instance, ledger, VERIFIERS[0], Side.AGREE, 5 * MICRO)
        resolve_by_criteria(instance, build_intention().decision_criteria, epoch=3)
        with pytest.raises(WaterfallError, match="state"):
            vote(instance, ledger, VERIFIERS[1], Side.AGREE, MICRO)

    def test_zero_vote_rejected(self, ledger):
        instance = open_instance(ledger)
        with pytest.raises(WaterfallError):
            vote(instance, ledger, VERIFIERS[0], Side.AGREE, 0)

    def test_fee_skimmed_from_gross_stake(self, ledger):
        instance = open_instance(ledger)
        vote(instance, ledger, VERIFIERS[0], Side.AGREE, 100 * MICRO, fee_ppm=10_000)
        assert instance.market.stakes[(VERIFIERS[0].id, Side.AGREE)] == 99 * MICRO
        assert ledger.pool_balance("fee_pool", Token.SUPRA) == 1 * MICRO


class TestDecisionCriteria:
    def test_majority_reached_resolves_agree(self, ledger):
        instance = open_instance(ledger)
        # seed 100 agree; add 160 agree / 100 disagree -> implied 260/360 = 0.722
        vote(instance, ledger, VERIFIERS[0], Side.AGREE, 160 * MICRO)
        vote(instance, ledger, VERIFIERS[1], Side.DISAGREE, 100 * MICRO)
        decision = check_decision_criteria(
            instance, build_intention(0.7).decision_criteria, voting_window_elapsed=True
        )
        assert decision.status is CriteriaStatus.RESOLVED
        assert decision.outcome is Side.AGREE

    def test_indecisive_vote_escalates(self, ledger):
        instance = open_instance(ledger)
        vote(instance, ledger, VERIFIERS[0], Side.AGREE, 10 * MICRO)
        vote(instance, ledger, VERIFIERS[1], Side.DISAGREE, 90 * MICRO)
        # implied = 110/200 = 0.55; neither side reaches 0.7
        decision = check_decision_criteria(
            instance, build_intention(0.7).decision_criteria, voting_window_elapsed=True
        )
        assert decision.status is CriteriaStatus.NEEDS_DEEP_SEARCHER

    def test_role_trigger_overrides_any_majority(self, ledger):
        instance = open_instance(ledger)
        vote(instance, ledger, VERIFIERS[0], Side.AGREE, 900 * MICRO)
        decision = check_decision_criteria(
            instance,
            build_intention(0.7, require_deep_searcher=True).decision_criteria,
            voting_window_elapsed=True,
        )
        assert decision.status is CriteriaStatus.NEEDS_DEEP_SEARCHER

    def test_supermajority_of_disagree_resolves_disagree(self, ledger):
        instance = open_instance(ledger)
        vote(instance, ledger, VERIFIERS[0], Side.DISAGREE, 900 * MICRO)
        decision = check_decision_criteria(
            instance, build_intention(0.7).decision_criteria, voting_window_elapsed=True
        )
        assert decision.status is CriteriaStatus.RESOLVED
        assert decision.outcome is Side.DISAGREE

    def test_window_still_open_defers(self, ledger):
        instance = open_instance(ledger)
        decision = check_decision_criteria(
            instance, build_intention().decision_criteria, voting_window_elapsed=False
        )
        assert decision.status is CriteriaStatus.STILL_OPEN

    def test_seed_only_market_is_uninformative(self, ledger):
        # implied probability would be 1.0, but no community vote exists
        instance = open_instance(ledger)
        decision = check_decision_criteria(
            instance, build_intention(0.7).decision_criteria, voting_window_elapsed=True
        )
        assert decision.status is CriteriaStatus.NEEDS_DEEP_SEARCHER

    def test_divergent_beliefs_escalate(self, ledger):
        instance = open_instance(ledger)
        sides = [Side.AGREE, Side.DISAGREE] * 4
        for i, side in enumerate(sides):
            vote(instance, ledger, VERIFIERS[i % 5], side, (200 + 100 * i) * MICRO)
        criteria = build_intention(0.51, divergence_tolerance=0.001).decision_criteria
        decision = check_decision_criteria(instance, criteria, voting_window_elapsed=True)
        assert decision.status is CriteriaStatus.NEEDS_DEEP_SEARCHER


def escalate(ledger, log=None):
    instance = open_instance(ledger, log=log)
    vote(instance, ledger, VERIFIERS[0], Side.AGREE, 10 * MICRO)
    vote(instance, ledger, VERIFIERS[1], Side.DISAGREE, 90 * MICRO)
    resolve_by_criteria(instance, build_intention().decision_criteria, epoch=3, log=log)
    return instance


class TestDeepSearcher:
    def test_resolution_opens_arbitration_window(self, ledger):
        instance = escalate(ledger)
        deep_searcher_resolve(
            instance, SEARCHER, R_MIN, Side.DISAGREE,
            r_min=R_MIN, arbitration_window=2, ledger=ledger, epoch=3,
        )
        assert instance.state is InstanceState.ARBITRATION_WINDOW
        assert instance.resolution.outcome is Side.DISAGREE
        assert instance.resolution.kind is ResolverKind.DEEP_SEARCHER
        assert ledger.balance(SEARCHER.id, Token.ALPHA, "locked") == R_MIN
        assert instance.window_deadlines[InstanceState.ARBITRATION_WINDOW] == 5

    def test_stake_below_r_min_rejected(self, ledger):
        instance = escalate(ledger)
        with pytest.raises(WaterfallError, match="stake"):
            deep_searcher_resolve(
                instance, SEARCHER, R_MIN - 1, Side.AGREE,
                r_min=R_MIN, arbitration_window=2, ledger=ledger, epoch=3,
            )

    def test_wrong_role_rejected(self, ledger):
        instance = escalate(ledger)
        with pytest.raises(WaterfallError, match="deep searcher"):
            deep_searcher_resolve(
                instance, VERIFIERS[0], R_MIN, Side.AGREE,
                r_min=R_MIN, arbitration_window=2, ledger=ledger, epoch=3,
            )

    def test_community_resolved_instance_cannot_be_deep_resolved(self, ledger):
        instance = open_instance(ledger)
        vote(instance, ledger, VERIFIERS[0], Side.AGREE, 900 * MICRO)
        resolve_by_criteria(instance, build_intention().decision_criteria, epoch=3)
        with pytest.raises(WaterfallError):
            deep_searcher_resolve(
                instance, SEARCHER, R_MIN, Side.AGREE,
                r_min=R_MIN, arbitration_window=2, ledger=ledger, epoch=3,
            )


def escalate_and_resolve(ledger, outcome=Side.DISAGREE, log=None):
    instance = escalate(ledger, log=log)
    deep_searcher_resolve(
        instance, SEARCHER, R_MIN, outcome,
        r_min=R_MIN, arbitration_window=2, ledger=ledger, epoch=3, log=log,
    )
    return instance


def challenge(instance, ledger, upheld, epoch=4, stake=2 * R_MIN, log=None):
    return arbitrator_challenge(
        instance, ARBITRATOR, stake, upheld,
        min_stake=2 * R_MIN, participation_count=5, min_participation=1,
        ledger=ledger, epoch=epoch, log=log,
    )


class TestArbitration:
    def test_upheld_challenge_flips_outcome_and_slashes_searcher(self, ledger):
        instance = escalate_and_resolve(ledger, Side.DISAGREE)
        staked_before = ledger.balance(SEARCHER.id, Token.ALPHA, "locked")
        assert staked_before == R_MIN
        upheld = challenge(instance, ledger, upheld=True)
        assert upheld is True
        assert instance.state is InstanceState.REVERSED
        assert instance.resolution.outcome is Side.AGREE
        assert ledger.balance(SEARCHER.id, Token.ALPHA, "locked") == 0
        assert ledger.pool_balance(SLASH_POOL, Token.ALPHA) == R_MIN
        # arbitrator got their stake back
        assert ledger.balance(ARBITRATOR.id, Token.ALPHA, "locked") == 0

    def test_failed_challenge_forfeits_arbitrator_stake(self, ledger):
        instance = escalate_and_resolve(ledger, Side.DISAGREE)
        free_before = ledger.balance(ARBITRATOR.id, Token.ALPHA, "free")
        challenge(instance, ledger, upheld=False)
        assert instance.state is InstanceState.ARBITRATION_WINDOW
        assert instance.resolution.outcome is Side.DISAGREE  # unchanged
        assert ledger.balance(ARBITRATOR.id, Token.ALPHA, "free") == free_before - 2 * R_MIN
        assert ledger.pool_balance(SLASH_POOL, Token.ALPHA) == 2 * R_MIN
        # searcher's stake survives until settlement
        assert ledger.balance(SEARCHER.id, Token.ALPHA, "locked") == R_MIN

    def test_challenge_after_window_close_rejected(self, ledger):
        instance = escalate_and_resolve(ledger)
        with pytest.raises(WaterfallError, match="closed"):
            challenge(instance, ledger, upheld=True, epoch=5)

    def test_unqualified_arbitrator_rejected(self, ledger):
        instance = escalate_and_resolve(ledger)
        with pytest.raises(WaterfallError, match="prior disputes"):
            arbitrator_challenge(
                instance, ARBITRATOR, 2 * R_MIN, True,
                min_stake=2 * R_MIN, participation_count=0, min_participation=1,
                ledger=ledger, epoch=4,
            )

    def test_exactly_one_slash_per_dispute(self, ledger):
        slashes = []
        instance = escalate_and_resolve(ledger)
        ledger.on_op = lambda op, *rest: slashes.append(rest) if op == "slash" else None
        challenge(instance, ledger, upheld=True)
        assert len(slashes) == 1
        with pytest.raises(WaterfallError):
            challenge(instance, ledger, upheld=False)

    def test_dispute_scope_alpha_conservation(self, ledger):
        # staked into dispute = searcher r_min + arbitrator 2*r_min
        instance = escalate_and_resolve(ledger)
        challenge(instance, ledger, upheld=False)
        settle_instance(
            instance, epoch=5, ledger=ledger, alpha_reward=0,
            eligibility=lambda a: True,
        )
        slashed = ledger.pool_balance(SLASH_POOL, Token.ALPHA)
        returned = ledger.balance(SEARCHER.id, Token.ALPHA, "free") - (200 - 50) * MICRO
        assert slashed + returned + ledger.balance(SEARCHER.id, Token.ALPHA, "locked") == 3 * R_MIN


class TestSettlement:
    def test_community_agree_settlement_conserves_and_mints(self, ledger):
        log = EventLog()
        instance = open_instance(ledger, log=log)
        vote(instance, ledger, VERIFIERS[0], Side.AGREE, 200 * MICRO)
        vote(instance, ledger, VERIFIERS[1], Side.AGREE, 100 * MICRO)
        vote(instance, ledger, VERIFIERS[2], Side.DISAGREE, 100 * MICRO)
        resolve_by_criteria(instance, build_intention().decision_criteria, epoch=3, log=log)
        pool_total = instance.market.total
        report = settle_instance(
            instance, epoch=3, ledger=ledger, alpha_reward=1 * MICRO,
            eligibility=lambda a: True, log=log,
        )
        assert instance.state is InstanceState.SETTLED
        assert report.outcome is Side.AGREE
        assert sum(report.payouts.values()) == pool_total
        assert ledger.pool_balance(MARKET_ESCROW, Token.SUPRA) == 0
        # three agree-side winners, proposer's seed is excluded from mints
        assert set(report.alpha_mints) == {VERIFIERS[0].id, VERIFIERS[1].id}
        assert report.commission_activated is True
        ledger.check_conservation()

    def test_disagree_settlement_costs_proposer_seed(self, ledger):
        instance = open_instance(ledger)
        vote(instance, ledger, VERIFIERS[0], Side.DISAGREE, 900 * MICRO)
        resolve_by_criteria(instance, build_intention().decision_criteria, epoch=3)
        free_before = ledger.balance(PROPOSER.id, Token.SUPRA, "free")
        report = settle_instance(
            instance, epoch=3, ledger=ledger, alpha_reward=MICRO,
            eligibility=lambda a: True,
        )
        assert report.outcome is Side.DISAGREE
        assert report.payouts.get(PROPOSER.id, 0) == 0
        assert ledger.balance(PROPOSER.id, Token.SUPRA, "free") == free_before
        assert report.commission_activated is False

    def test_reversed_instance_settles_with_flipped_outcome(self, ledger):
        instance = escalate_and_resolve(ledger, Side.DISAGREE)
        challenge(instance, ledger, upheld=True)
        report = settle_instance(
            instance, epoch=4, ledger=ledger, alpha_reward=0, eligibility=lambda a: True,
        )
        assert report.outcome is Side.AGREE
        assert instance.state is InstanceState.SETTLED

    def test_unchallenged_window_settles_after_deadline(self, ledger):
        instance = escalate_and_resolve(ledger, Side.DISAGREE)
        assert not settlement_due(instance, 4)
        with pytest.raises(WaterfallError, match="premature"):
            settle_instance(
                instance, epoch=4, ledger=ledger, alpha_reward=0, eligibility=lambda a: True,
            )
        report = settle_instance(
            instance, epoch=5, ledger=ledger, alpha_reward=0, eligibility=lambda a: True,
        )
        assert report.outcome is Side.DISAGREE
        # searcher's lock released
        assert ledger.balance(SEARCHER.id, Token.ALPHA, "locked") == 0
        assert ledger.balance(SEARCHER.id, Token.ALPHA, "free") == 200 * MICRO

    def test_no_double_settlement(self, ledger):
        instance = open_instance(ledger)
        vote(instance, ledger, VERIFIERS[0], Side.AGREE, 900 * MICRO)
        resolve_by_criteria(instance, build_intention().decision_criteria, epoch=3)
        settle_instance(instance, epoch=3, ledger=ledger, alpha_reward=0, eligibility=lambda a: True)
        with pytest.raises(WaterfallError):
            settle_instance(instance, epoch=3, ledger=ledger, alpha_reward=0, eligibility=lambda a: True)

    def test_ineligible_winners_not_minted(self, ledger):
        instance = open_instance(ledger)
        vote(instance, ledger, VERIFIERS[0], Side.AGREE, 900 * MICRO)
        resolve_by_criteria(instance, build_intention().decision_criteria, epoch=3)
        report = settle_instance(
            instance, epoch=3, ledger=ledger, alpha_reward=MICRO, eligibility=lambda a: False,
        )
        assert report.alpha_mints == {}


class TestStateMachine:
    def test_log_transitions_follow_allowed_relation(self, ledger):
        log = EventLog()
        instance = escalate_and_resolve(ledger, log=log)
        challenge(instance, ledger, upheld=True, log=log)
        settle_instance(
            instance, epoch=4, ledger=ledger, alpha_reward=0,
            eligibility=lambda a: True, log=log,
        )
        transitions = [
            (InstanceState(e.src), InstanceState(e.dst)) for e in log.of_kind("transition")
        ]
        assert transitions
        for t in transitions:
            assert t in ALLOWED_TRANSITIONS

    def test_illegal_transition_raises(self, ledger):
        instance = open_instance(ledger)
        with pytest.raises(WaterfallError, match="illegal transition"):
            instance.transition(InstanceState.SETTLED, 1, None)


class TestReopenIntention:
    def test_cadence_met_in_rebalancing(self):
        intent = build_intention()
        assert reopen_intention(intent, 10, 15, Phase.REBALANCING) is True

    def test_cadence_not_met(self):
        intent = build_intention()
        assert reopen_intention(intent, 10, 14, Phase.REBALANCING) is False

    def test_wrong_phase_blocks_reopen(self):
        intent = build_intention()
        assert reopen_intention(intent, 10, 15, Phase.ASSESSMENT) is False
