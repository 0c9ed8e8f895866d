"""Decision-waterfall state machine for (strategy, intention) validation.

Each validation instance owns one binary market and walks

    Initiated -> MarketOpen -> PendingResolution -> (ArbitrationWindow) -> Settled

with ArbitrationWindow -> Reversed -> Settled as the only detour. The
community resolves directly when one side's stake share reaches the
intention's majority threshold at the close of voting; otherwise (or when
the intention demands it) a deep searcher stakes reputation to resolve,
which opens an arbitration window. A challenge inside the window slashes
exactly one of the two reputation stakes: the deep searcher's when the
challenge is upheld (and the outcome flips), the arbitrator's when it
fails. Settlement pays the market, mints reputation rewards to eligible
winning voters and activates the proposer's commission on an Agree outcome.

State transitions and every token move go through the ledger and the event
log, so a run can be replayed and audited record by record.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

from .core import AgentId, DecisionCriteria, IntentionSpec, Phase, ProtocolError, Role, StrategyProposal, evaluate_predicate
from .events import EventLog
from .fixedpoint import MICRO
from .markets import LmsrMarket, Market, MarketError, ParimutuelPool, Side
from .tokens import (
    DualLedger,
    MARKET_ESCROW,
    MintReason,
    SUBSIDY_POOL,
    Token,
)


class WaterfallError(ProtocolError):
    pass


class InstanceState(str, Enum):
    INITIATED = "initiated"
    MARKET_OPEN = "market_open"
    PENDING_RESOLUTION = "pending_resolution"
    ARBITRATION_WINDOW = "arbitration_window"
    REVERSED = "reversed"
    SETTLED = "settled"


ALLOWED_TRANSITIONS: frozenset[tuple[InstanceState, InstanceState]] = frozenset(
    {
        (InstanceState.INITIATED, InstanceState.MARKET_OPEN),
        (InstanceState.MARKET_OPEN, InstanceState.PENDING_RESOLUTION),
        (InstanceState.PENDING_RESOLUTION, InstanceState.ARBITRATION_WINDOW),
        (InstanceState.PENDING_RESOLUTION, InstanceState.SETTLED),
        (InstanceState.ARBITRATION_WINDOW, InstanceState.REVERSED),
        (InstanceState.ARBITRATION_WINDOW, InstanceState.SETTLED),
        (InstanceState.REVERSED, InstanceState.SETTLED),
    }
)


class ResolverKind(str, Enum):
    COMMUNITY = "community"
    DEEP_SEARCHER = "deep_searcher"
    ARBITRATOR = "arbitrator"


@dataclass
class Resolution:
    outcome: Side
    kind: ResolverKind
    resolver_id: str


@dataclass
class DisputeRecord:
    challenger: str
    target_resolver: str
    challenger_stake: int
    upheld: bool | None = None


class CriteriaStatus(str, Enum):
    RESOLVED = "resolved"
    NEEDS_DEEP_SEARCHER = "needs_deep_searcher"
    STILL_OPEN = "still_open"


@dataclass(frozen=True)
class CriteriaDecision:
    status: CriteriaStatus
    outcome: Side | None = None


@dataclass
class ValidationInstance:
    instance_id: str
    strategy_id: str
    intention_id: str
    proposer_id: str
    owner_id: str
    market: Market
    proposer_seed: int
    state: InstanceState = InstanceState.INITIATED
    resolution: Resolution | None = None
    dispute: DisputeRecord | None = None
    window_deadlines: dict[InstanceState, int] = field(default_factory=dict)
    searcher_escrow: int = 0
    lmsr_collected_micro: int = 0
    opened_epoch: int = 0
    settled_epoch: int | None = None
    fraud_flagged: bool = False

    @property
    def mechanism(self) -> str:
        return "parimutuel" if isinstance(self.market, ParimutuelPool) else "lmsr"

    def transition(self, to: InstanceState, epoch: int, log: EventLog | None) -> None:
        if (self.state, to) not in ALLOWED_TRANSITIONS:
            raise WaterfallError(
                f"illegal transition {self.state.value} -> {to.value} for {self.instance_id}"
            )
        src = self.state
        self.state = to
        if log is not None:
            log.append(epoch, "transition", instance=self.instance_id, src=src.value, dst=to.value)


@dataclass
class SettlementReport:
    instance_id: str
    outcome: Side
    payouts: dict[str, int]
    alpha_mints: dict[str, int]
    maker_loss_micro: int
    pool_total: int
    implied: float
    commission_activated: bool


def open_validation(
    *,
    instance_id: str,
    strategy: StrategyProposal,
    intention: IntentionSpec,
    proposer_stake: int,
    c_min: int,
    mechanism: str,
    liquidity: float,
    ledger: DualLedger,
    epoch: int,
    log: EventLog | None = None,
) -> ValidationInstance:
    """Create a validation instance and open its market.

    The proposer's stake seeds the Agree side of a parimutuel pool (the
    market's initial agree total equals the stake exactly); for an LMSR
    market the stake is held as the maker bond and must cover the
    worst-case subsidy ``liquidity * ln(2)``. Rejected below the minimum
    stake (frivolous-submission guard) or when the strategy fails any of
    the intention's predicates.
    """
    if proposer_stake < c_min:
        raise WaterfallError(
            f"proposer stake {proposer_stake} below minimum {c_min} (frivolous submission guard)"
        )
    for pred in intention.predicates:
        if not evaluate_predicate(pred, strategy.metrics_profile):
            raise WaterfallError(
                f"strategy {strategy.strategy_id} fails predicate {pred} of {intention.intention_id}"
            )
    if ledger.supra[intention.owner.id]["escrowed"] < intention.deposit:
        raise WaterfallError(f"intention {intention.intention_id} deposit not escrowed")

    market: Market
    if mechanism == "parimutuel":
        market = ParimutuelPool(claim_id=instance_id)
    elif mechanism == "lmsr":
        bond_floor = math.ceil(liquidity * math.log(2.0) * MICRO)
        if proposer_stake < bond_floor:
            raise WaterfallError(
                f"LMSR maker bond {proposer_stake} below worst-case subsidy {bond_floor}"
            )
        market = LmsrMarket(claim_id=instance_id, liquidity=liquidity)
    else:
        raise WaterfallError(f"unknown market mechanism {mechanism!r}")

    instance = ValidationInstance(
        instance_id=instance_id,
        strategy_id=strategy.strategy_id,
        intention_id=intention.intention_id,
        proposer_id=strategy.proposer.id,
        owner_id=intention.owner.id,
        market=market,
        proposer_seed=proposer_stake,
        opened_epoch=epoch,
    )
    if mechanism == "parimutuel":
        ledger.transfer(
            f"a:{strategy.proposer.id}:free", f"p:{MARKET_ESCROW}", Token.SUPRA, proposer_stake
        )
        market.stake(strategy.proposer.id, Side.AGREE, proposer_stake)
    else:
        ledger.escrow(strategy.proposer.id, Token.SUPRA, proposer_stake)
    if log is not None:
        log.append(
            epoch, "instance_open",
            instance=instance_id, strategy=strategy.strategy_id,
            intention=intention.intention_id, mechanism=instance.mechanism,
            seed_stake=proposer_stake, liquidity=liquidity if mechanism == "lmsr" else 0.0,
        )
    instance.transition(InstanceState.MARKET_OPEN, epoch, log)
    return instance


def cast_vote(
    instance: ValidationInstance,
    voter: AgentId,
    side: Side,
    amount: int,
    *,
    phase: Phase,
    fee_rate_ppm: int,
    ledger: DualLedger,
    epoch: int,
    log: EventLog | None = None,
) -> None:
    """Commit tokens to one side of the instance's market.

    Only while the market is open and the clock is in the assessment phase.
    A validation fee is skimmed off the gross amount; for LMSR markets the
    amount is interpreted as a share quantity and the trader pays the cost
    function price (rounded up to a whole micro-unit so the maker's loss
    bound survives quantisation).
    """
    if instance.state is not InstanceState.MARKET_OPEN:
        raise WaterfallError(f"cannot vote in state {instance.state.value}")
    if phase is not Phase.ASSESSMENT:
        raise WaterfallError(f"voting is only allowed in the assessment phase, not {phase.value}")
    if amount <= 0:
        raise WaterfallError("vote amount must be > 0")
    if isinstance(instance.market, ParimutuelPool):
        free = ledger.supra[voter.id]["free"]
        if free < amount:
            raise WaterfallError(f"{voter.id} has insufficient free SUPRA for a {amount} stake")
        net, fee = ledger.charge_validation_fee(voter.id, amount, fee_rate_ppm)
        ledger.transfer(f"a:{voter.id}:free", f"p:{MARKET_ESCROW}", Token.SUPRA, net)
        instance.market.stake(voter.id, side, net)
        if log is not None:
            log.append(
                epoch, "trade", instance=instance.instance_id, voter=voter.id,
                side=side.value, gross=amount, fee=fee, net=net,
            )
    else:
        shares = amount / MICRO
        cost = instance.market.cost(side, shares)
        cost_micro = math.ceil(cost * MICRO)
        fee = (cost_micro * fee_rate_ppm) // MICRO
        if ledger.supra[voter.id]["free"] < cost_micro + fee:
            raise WaterfallError(
                f"{voter.id} has insufficient free SUPRA for LMSR cost {cost_micro + fee}"
            )
        if fee:
            ledger.transfer(f"a:{voter.id}:free", "p:fee_pool", Token.SUPRA, fee, op="fee")
        ledger.transfer(f"a:{voter.id}:free", f"p:{MARKET_ESCROW}", Token.SUPRA, cost_micro)
        instance.market.buy(voter.id, side, shares)
        instance.lmsr_collected_micro += cost_micro
        if log is not None:
            log.append(
                epoch, "lmsr_trade", instance=instance.instance_id, voter=voter.id,
                side=side.value, shares=shares, cost=cost_micro, fee=fee,
            )


def _community_votes_present(instance: ValidationInstance) -> bool:
    """At least one stake beyond the proposer's own seed."""
    market = instance.market
    if isinstance(market, ParimutuelPool):
        for (voter, _side), amt in market.stakes.items():
            if voter != instance.proposer_id and amt > 0:
                return True
        return False
    return bool(market.holdings)


def check_decision_criteria(
    instance: ValidationInstance,
    criteria: DecisionCriteria,
    *,
    voting_window_elapsed: bool,
    divergence_window: int = 8,
) -> CriteriaDecision:
    """Classify a market at the close of voting.

    Deterministic: a role trigger or an unmet majority threshold escalates
    to a deep searcher, as does a market whose belief signal was too
    volatile over the last ``divergence_window`` votes (when the intention
    set a divergence tolerance) or one that attracted no community votes at
    all (a proposer-seeded pool alone is uninformative).
    """
    if instance.state is not InstanceState.MARKET_OPEN:
        raise WaterfallError(f"criteria check in state {instance.state.value}")
    if not voting_window_elapsed:
        return CriteriaDecision(CriteriaStatus.STILL_OPEN)
    if criteria.require_deep_searcher:
        return CriteriaDecision(CriteriaStatus.NEEDS_DEEP_SEARCHER)
    if not _community_votes_present(instance):
        return CriteriaDecision(CriteriaStatus.NEEDS_DEEP_SEARCHER)
    if criteria.divergence_tolerance is not None:
        tail = instance.market.belief_history[-divergence_window:]
        if len(tail) >= 2 and statistics.pstdev(tail) > criteria.divergence_tolerance:
            return CriteriaDecision(CriteriaStatus.NEEDS_DEEP_SEARCHER)
    p = instance.market.implied_probability()
    if p >= criteria.majority_threshold:
        return CriteriaDecision(CriteriaStatus.RESOLVED, Side.AGREE)
    if (1.0 - p) >= criteria.majority_threshold:
        return CriteriaDecision(CriteriaStatus.RESOLVED, Side.DISAGREE)
    return CriteriaDecision(CriteriaStatus.NEEDS_DEEP_SEARCHER)


def resolve_by_criteria(
    instance: ValidationInstance,
    criteria: DecisionCriteria,
    *,
    epoch: int,
    log: EventLog | None = None,
    divergence_window: int = 8,
) -> CriteriaDecision:
    """Apply the criteria check at window close and advance the state machine."""
    decision = check_decision_criteria(
        instance, criteria, voting_window_elapsed=True, divergence_window=divergence_window
    )
    if log is not None:
        try:
            implied = instance.market.implied_probability()
        except MarketError:
            implied = 0.5
        log.append(
            epoch, "criteria", instance=instance.instance_id, implied=implied,
            decision=decision.outcome.value if decision.outcome else decision.status.value,
        )
    if decision.status is CriteriaStatus.RESOLVED:
        instance.resolution = Resolution(decision.outcome, ResolverKind.COMMUNITY, "community")
        instance.transition(InstanceState.PENDING_RESOLUTION, epoch, log)
        if log is not None:
            log.append(
                epoch, "resolution", instance=instance.instance_id,
                resolver_kind=ResolverKind.COMMUNITY.value, resolver="community",
                outcome=decision.outcome.value,
            )
    else:
        instance.transition(InstanceState.PENDING_RESOLUTION, epoch, log)
    return decision


def deep_searcher_resolve(
    instance: ValidationInstance,
    searcher: AgentId,
    stake: int,
    outcome: Side,
    *,
    r_min: int,
    arbitration_window: int,
    ledger: DualLedger,
    epoch: int,
    log: EventLog | None = None,
) -> None:
    """Resolve an escalated instance with a reputation-staked ruling.

    The stake is locked until settlement (returned then, unless slashed by
    an upheld challenge) and an arbitration window opens.
    """
    if instance.state is not InstanceState.PENDING_RESOLUTION or instance.resolution is not None:
        raise WaterfallError(f"{instance.instance_id} is not awaiting a deep searcher")
    if searcher.role is not Role.DEEP_SEARCHER:
        raise WaterfallError(f"{searcher.id} is not a deep searcher")
    if stake < r_min:
        raise WaterfallError(f"reputation stake {stake} below minimum {r_min}")
    ledger.escrow(searcher.id, Token.ALPHA, stake)
    instance.searcher_escrow = stake
    instance.resolution = Resolution(outcome, ResolverKind.DEEP_SEARCHER, searcher.id)
    instance.window_deadlines[InstanceState.ARBITRATION_WINDOW] = epoch + arbitration_window
    instance.transition(InstanceState.ARBITRATION_WINDOW, epoch, log)
    if log is not None:
        log.append(epoch, "ds_stake", instance=instance.instance_id, searcher=searcher.id, stake=stake)
        log.append(
            epoch, "resolution", instance=instance.instance_id,
            resolver_kind=ResolverKind.DEEP_SEARCHER.value, resolver=searcher.id, outcome=outcome.value,
        )


def arbitrator_challenge(
    instance: ValidationInstance,
    arbitrator: AgentId,
    stake: int,
    upheld_by_audit: bool,
    *,
    min_stake: int,
    participation_count: int,
    min_participation: int,
    ledger: DualLedger,
    epoch: int,
    log: EventLog | None = None,
) -> bool:
    """Challenge a deep-searcher resolution inside the arbitration window.

    Upheld: the outcome flips, the deep searcher's locked stake is slashed
    to zero and the state moves to Reversed. Failed: the arbitrator's own
    stake is forfeited and the instance proceeds to settlement with the
    original outcome. Exactly one of the two stakes is slashed either way.
    Returns whether the challenge was upheld.
    """
    if instance.state is not InstanceState.ARBITRATION_WINDOW:
        raise WaterfallError(f"no arbitration window open on {instance.instance_id}")
    deadline = instance.window_deadlines[InstanceState.ARBITRATION_WINDOW]
    if epoch >= deadline:
        raise WaterfallError(f"arbitration window on {instance.instance_id} closed at {deadline}")
    if instance.dispute is not None:
        raise WaterfallError(f"{instance.instance_id} already has a dispute")
    if arbitrator.role is not Role.ARBITRATOR:
        raise WaterfallError(f"{arbitrator.id} is not an arbitrator")
    if participation_count < min_participation:
        raise WaterfallError(
            f"{arbitrator.id} has {participation_count} prior disputes, needs {min_participation}"
        )
    if stake < min_stake:
        raise WaterfallError(f"arbitration stake {stake} below minimum {min_stake}")
    resolution = instance.resolution
    assert resolution is not None and resolution.kind is ResolverKind.DEEP_SEARCHER
    ledger.escrow(arbitrator.id, Token.ALPHA, stake)
    instance.dispute = DisputeRecord(
        challenger=arbitrator.id, target_resolver=resolution.resolver_id, challenger_stake=stake,
    )
    instance.dispute.upheld = upheld_by_audit
    if log is not None:
        log.append(
            epoch, "challenge", instance=instance.instance_id, arbitrator=arbitrator.id,
            stake=stake, upheld=upheld_by_audit,
        )
    if upheld_by_audit:
        ledger.slash(resolution.resolver_id, Token.ALPHA, instance.searcher_escrow, sub="locked")
        if log is not None:
            log.append(
                epoch, "slash_event", agent=resolution.resolver_id, token=Token.ALPHA.value,
                amount=instance.searcher_escrow, reason="challenge_upheld",
                instance=instance.instance_id,
            )
        instance.searcher_escrow = 0
        ledger.unescrow(arbitrator.id, Token.ALPHA, stake)
        instance.resolution = Resolution(
            resolution.outcome.other(), ResolverKind.ARBITRATOR, arbitrator.id
        )
        instance.transition(InstanceState.REVERSED, epoch, log)
        if log is not None:
            log.append(
                epoch, "resolution", instance=instance.instance_id,
                resolver_kind=ResolverKind.ARBITRATOR.value, resolver=arbitrator.id,
                outcome=instance.resolution.outcome.value,
            )
    else:
        ledger.slash(arbitrator.id, Token.ALPHA, stake, sub="locked")
        if log is not None:
            log.append(
                epoch, "slash_event", agent=arbitrator.id, token=Token.ALPHA.value,
                amount=stake, reason="challenge_failed", instance=instance.instance_id,
            )
    return upheld_by_audit


def settlement_due(instance: ValidationInstance, epoch: int) -> bool:
    """Whether the instance can settle at ``epoch``."""
    if instance.state is InstanceState.REVERSED:
        return True
    if instance.state is InstanceState.PENDING_RESOLUTION:
        return instance.resolution is not None and instance.resolution.kind is ResolverKind.COMMUNITY
    if instance.state is InstanceState.ARBITRATION_WINDOW:
        if instance.dispute is not None:
            return instance.dispute.upheld is False  # upheld path goes through Reversed
        return epoch >= instance.window_deadlines[InstanceState.ARBITRATION_WINDOW]
    return False


def settle_instance(
    instance: ValidationInstance,
    *,
    epoch: int,
    ledger: DualLedger,
    alpha_reward: int,
    eligibility: Callable[[str], bool],
    log: EventLog | None = None,
) -> SettlementReport:
    """Settle the market with the final outcome and distribute proceeds.

    Parimutuel payouts conserve the pool exactly. LMSR winners are paid one
    token per share (floored to micro-units); any shortfall against the
    collected costs is drawn from the proposer's bond, then the subsidy
    pool, and a surplus plus the leftover bond returns to the proposer.
    Winning voters passing the eligibility predicate are minted the flat
    reputation reward; the deep searcher's lock is released if it survived
    arbitration. On Agree settlement the proposer's commission activates.
    """
    if not settlement_due(instance, epoch):
        raise WaterfallError(f"premature settlement of {instance.instance_id}")
    resolution = instance.resolution
    assert resolution is not None
    outcome = resolution.outcome

    payouts: dict[str, int] = {}
    maker_loss_micro = 0
    implied = 0.5
    if isinstance(instance.market, ParimutuelPool):
        pool_total = instance.market.total
        if pool_total:
            implied = instance.market.implied_probability()
        payouts = instance.market.settle(outcome)
        for agent_id in sorted(payouts):
            amt = payouts[agent_id]
            if amt:
                ledger.transfer(f"p:{MARKET_ESCROW}", f"a:{agent_id}:free", Token.SUPRA, amt)
    else:
        market = instance.market
        implied = market.price()
        float_payouts, _ = market.settle(outcome)
        payouts = {v: int(q * MICRO) for v, q in float_payouts.items()}
        pool_total = instance.lmsr_collected_micro
        paid_total = sum(payouts.values())
        maker_loss_micro = paid_total - instance.lmsr_collected_micro
        if maker_loss_micro > 0:
            bond_draw = min(instance.proposer_seed, maker_loss_micro)
            if bond_draw:
                ledger.transfer(
                    f"a:{instance.proposer_id}:escrowed", f"p:{MARKET_ESCROW}",
                    Token.SUPRA, bond_draw,
                )
            shortfall = maker_loss_micro - bond_draw
            if shortfall:
                ledger.transfer(f"p:{SUBSIDY_POOL}", f"p:{MARKET_ESCROW}", Token.SUPRA, shortfall)
            bond_left = instance.proposer_seed - bond_draw
        else:
            bond_left = instance.proposer_seed
        if bond_left:
            ledger.unescrow(instance.proposer_id, Token.SUPRA, bond_left)
        for agent_id in sorted(payouts):
            amt = payouts[agent_id]
            if amt:
                ledger.transfer(f"p:{MARKET_ESCROW}", f"a:{agent_id}:free", Token.SUPRA, amt)
        surplus = instance.lmsr_collected_micro + max(0, maker_loss_micro) - paid_total
        if surplus:
            ledger.transfer(
                f"p:{MARKET_ESCROW}", f"a:{instance.proposer_id}:free", Token.SUPRA, surplus
            )

    if instance.searcher_escrow and resolution.kind is not ResolverKind.ARBITRATOR:
        searcher_id = (
            resolution.resolver_id
            if resolution.kind is ResolverKind.DEEP_SEARCHER
            else None
        )
        if searcher_id is not None:
            ledger.unescrow(searcher_id, Token.ALPHA, instance.searcher_escrow)
            instance.searcher_escrow = 0

    mints: dict[str, int] = {}
    if alpha_reward > 0:
        for agent_id in sorted(payouts):
            if agent_id == instance.proposer_id:
                continue  # the seed stake is collateral, not a market vote
            if payouts[agent_id] > 0 and eligibility(agent_id):
                ledger.mint_alpha(agent_id, alpha_reward, MintReason.VERIFIER_REWARD)
                mints[agent_id] = alpha_reward
                if log is not None:
                    log.append(
                        epoch, "mint_event", agent=agent_id, amount=alpha_reward,
                        reason=MintReason.VERIFIER_REWARD.value, instance=instance.instance_id,
                    )
        if resolution.kind is ResolverKind.DEEP_SEARCHER and eligibility(resolution.resolver_id):
            # the ruling survived arbitration: the searcher earns the reward too
            ledger.mint_alpha(resolution.resolver_id, alpha_reward, MintReason.DEEP_SEARCHER_REWARD)
            mints[resolution.resolver_id] = mints.get(resolution.resolver_id, 0) + alpha_reward
            if log is not None:
                log.append(
                    epoch, "mint_event", agent=resolution.resolver_id, amount=alpha_reward,
                    reason=MintReason.DEEP_SEARCHER_REWARD.value, instance=instance.instance_id,
                )

    instance.transition(InstanceState.SETTLED, epoch, log)
    instance.settled_epoch = epoch
    if log is not None:
        log.append(
            epoch, "settle", instance=instance.instance_id, outcome=outcome.value,
            pool_total=pool_total, maker_loss=maker_loss_micro, implied=implied,
        )
        for agent_id in sorted(payouts):
            log.append(
                epoch, "payout", instance=instance.instance_id,
                agent=agent_id, amount=payouts[agent_id],
            )
    return SettlementReport(
        instance_id=instance.instance_id,
        outcome=outcome,
        payouts=payouts,
        alpha_mints=mints,
        maker_loss_micro=maker_loss_micro,
        pool_total=pool_total,
        implied=implied,
        commission_activated=outcome is Side.AGREE,
    )


def reopen_intention(
    intention: IntentionSpec,
    last_validation_epoch: int,
    current_epoch: int,
    phase: Phase,
) -> bool:
    """Whether the intention's cadence allows reassessment this epoch."""
    return (
        phase is Phase.REBALANCING
        and (current_epoch - last_validation_epoch) >= intention.readjust_every
    )
