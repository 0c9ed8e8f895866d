"""Deterministic simulation engine: one event loop over the phase cycle.

Per epoch, in fixed order: proposals (and intention creation at genesis),
voting at the start of each assessment interval, resolution and escalation
at its end, arbitration-window progression, settlements due, reallocation
at the end of each rebalancing interval, realised returns and commissions
at the start of each withdrawal interval, scheduled audits, and the lottery
top-up. Every token movement flows through the ledger callback into the
event log, so the log is a complete replayable record; identical
(config, seed) pairs produce byte-identical logs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..allocation import (
    EligibleInstance,
    ReturnModel,
    UtilityKind,
    UtilityModel,
    VerificationCostModel,
    confidence_score,
    meta_allocation,
    realized_value,
)
from ..audit import AuditOutcome, AuditSchedule, run_audit, sample_audit_events
from ..core import (
    AgentId,
    DecisionCriteria,
    EpochClock,
    Goal,
    IntentionSpec,
    Phase,
    Role,
    StrategyProposal,
    advance_epoch,
)
from ..events import EventLog
from ..fixedpoint import MICRO, scale_micro, to_micro
from ..markets import Side
from ..rng import StreamRegistry
from ..tokens import (
    CommissionContract,
    DualLedger,
    EXTERNAL_MARKET,
    FEE_POOL,
    LOTTERY_POOL,
    SLASH_POOL,
    SUBSIDY_POOL,
    Token,
)
from ..waterfall import (
    CriteriaStatus,
    InstanceState,
    ValidationInstance,
    WaterfallError,
    arbitrator_challenge,
    cast_vote,
    deep_searcher_resolve,
    open_validation,
    reopen_intention,
    resolve_by_criteria,
    settle_instance,
    settlement_due,
)
from .policies import ArbitratorPolicy, DeepSearcherPolicy, ProposerPolicy, VerifierPolicy
from .scenario import ScenarioConfig


@dataclass
class EligibleRecord:
    strategy_id: str
    instance_id: str
    omega: float
    agree_fraction: float
    complexity: float


@dataclass
class RunResult:
    seed: int
    log: EventLog
    engine: "Engine"
    snapshots: list[tuple[int, list[str]]] = field(default_factory=list)


class Engine:
    def __init__(self, config: ScenarioConfig, seed: int):
        self.config = config
        self.seed = seed
        self.streams = StreamRegistry(seed)
        self.log = EventLog()
        self.clock = EpochClock(
            interval_lengths={
                Phase.PROPOSAL: config.intervals.proposal,
                Phase.ASSESSMENT: config.intervals.assessment,
                Phase.REBALANCING: config.intervals.rebalancing,
                Phase.WITHDRAWAL: config.intervals.withdrawal,
            }
        )
        self.ledger = DualLedger()
        self.ledger.on_op = self._on_ledger_op

        self.owners: list[AgentId] = []
        self.proposers: list[AgentId] = []
        self.verifiers: list[AgentId] = []
        self.searchers: list[AgentId] = []
        self.arbitrators: list[AgentId] = []
        self.intentions: dict[str, IntentionSpec] = {}
        self.strategies: dict[str, StrategyProposal] = {}
        self.instances: dict[str, ValidationInstance] = {}
        self.commissions: dict[tuple[str, str], CommissionContract] = {}
        self.eligible: dict[str, dict[str, EligibleRecord]] = {}
        self.allocations: dict[str, dict[str, int]] = {}
        self.allocated_once: set[str] = set()
        self.last_validation_epoch: dict[str, int] = {}
        self.fraud_flagged: set[str] = set()
        self.audit_epochs: dict[str, list[int]] = {}
        self.audit_rngs: dict[str, np.random.Generator] = {}
        self.signals: dict[tuple[str, str], float] = {}
        self.arb_looked: set[tuple[str, str]] = set()
        self.participation: dict[str, int] = {}
        self.verifier_policies: dict[str, VerifierPolicy] = {}
        self.proposer_policies: dict[str, ProposerPolicy] = {}
        self.searcher_policy = DeepSearcherPolicy(config.policies.deep_searcher_accuracy)
        self.arbitrator_policy = ArbitratorPolicy(
            config.policies.arbitrator_accuracy, config.policies.challenge_propensity
        )
        self.audit_schedule = AuditSchedule(
            rate=config.audit.rate,
            gas_fee=to_micro(config.audit.gas_fee),
            reward_coeff=config.audit.reward_coeff,
        )
        self.utility = UtilityModel(
            kind=UtilityKind(config.allocation.utility),
            risk_aversion=config.allocation.risk_aversion,
            metric_weights=tuple(config.allocation.metric_weights),
        )
        self.returns = ReturnModel(
            mean_intercept=config.returns.mean_intercept,
            mean_slope=config.returns.mean_slope,
            noise_scale=config.returns.noise_scale,
            confidence_coupling=config.returns.confidence_coupling,
        )
        self.cost_model = VerificationCostModel(
            base_fee=config.costs.base_fee,
            marginal_rate=config.costs.marginal_rate,
            complexity_exponent=config.costs.complexity_exponent,
        )
        self._strategy_counter = 0
        self._instance_counter = 0

    # -- wiring ---------------------------------------------------------------

    def _on_ledger_op(self, op: str, src: str, dst: str, token: Token, amount: int) -> None:
        self.log.append(
            self.clock.epoch, "ledger", op=op, src=src, dst=dst, token=token.value, amount=amount
        )

    @property
    def fee_rate_ppm(self) -> int:
        return round(self.config.market.fee_rate * MICRO)

    def _eligibility(self, agent_id: str) -> bool:
        return self.ledger.alpha_total(agent_id) >= to_micro(self.config.protocol.rho_min)

    def _claim_truth(self, strategy: StrategyProposal) -> Side:
        threshold = self.config.protocol.claim_truth_threshold
        return Side.AGREE if strategy.true_quality >= threshold else Side.DISAGREE

    def _is_fraudulent(self, quality: float) -> bool:
        return quality < self.config.protocol.fraud_threshold

    # -- setup ----------------------------------------------------------------

    def setup(self) -> None:
        cfg = self.config
        self.log.append(
            0, "run_meta",
            seed=self.seed, epochs=cfg.run.epochs, audit_rate=cfg.audit.rate,
            discount=cfg.allocation.discount, fraud_threshold=cfg.protocol.fraud_threshold,
            claim_truth_threshold=cfg.protocol.claim_truth_threshold,
            fee_rate_ppm=self.fee_rate_ppm, utility=cfg.allocation.utility,
            risk_aversion=cfg.allocation.risk_aversion, cost_base=cfg.costs.base_fee,
            cost_rate=cfg.costs.marginal_rate, cost_exponent=cfg.costs.complexity_exponent,
        )
        roles = [
            (Role.CAPITAL_OWNER, "own", cfg.population.capital_owners,
             cfg.genesis.owner_supra, cfg.genesis.owner_alpha, self.owners),
            (Role.PROPOSER, "prop", cfg.population.proposers,
             cfg.genesis.proposer_supra, 0.0, self.proposers),
            (Role.VERIFIER, "ver", cfg.population.verifiers,
             cfg.genesis.verifier_supra, cfg.genesis.verifier_alpha, self.verifiers),
            (Role.DEEP_SEARCHER, "deep", cfg.population.deep_searchers,
             cfg.genesis.searcher_supra, cfg.genesis.searcher_alpha, self.searchers),
            (Role.ARBITRATOR, "arb", cfg.population.arbitrators,
             cfg.genesis.arbitrator_supra, cfg.genesis.arbitrator_alpha, self.arbitrators),
        ]
        for role, prefix, count, supra, alpha, bucket in roles:
            for i in range(1, count + 1):
                agent = AgentId(f"{prefix}{i}", role)
                bucket.append(agent)
                self.ledger.genesis(agent.id, to_micro(supra), to_micro(alpha))
                self.log.append(
                    0, "genesis_agent", agent=agent.id, role=role.value,
                    supra=to_micro(supra), alpha=to_micro(alpha),
                )
        for pool, amount in (
            (LOTTERY_POOL, cfg.audit.lottery_genesis),
            (EXTERNAL_MARKET, cfg.genesis.external_market),
            (SUBSIDY_POOL, cfg.genesis.subsidy_pool),
        ):
            if amount > 0:
                self.ledger.genesis_pool(pool, Token.SUPRA, to_micro(amount))
                self.log.append(
                    0, "genesis_pool", account=pool, token="supra", amount=to_micro(amount)
                )

        n_verifiers = max(1, len(self.verifiers))
        lazy_cutoff = int(cfg.policies.lazy_fraction * n_verifiers)
        for i, v in enumerate(self.verifiers):
            self.verifier_policies[v.id] = VerifierPolicy(
                noise=cfg.policies.verifier_noise,
                stake=to_micro(cfg.policies.vote_stake),
                truth_threshold=cfg.protocol.claim_truth_threshold,
                lazy=i < lazy_cutoff,
                abstain_probability=cfg.policies.abstain_probability,
            )
        n_proposers = max(1, len(self.proposers))
        adversarial_cutoff = int(cfg.policies.adversarial_fraction * n_proposers)
        for i, p in enumerate(self.proposers):
            adversarial = i < adversarial_cutoff
            q = cfg.quality
            self.proposer_policies[p.id] = ProposerPolicy(
                adversarial=adversarial,
                submit_probability=cfg.policies.proposal_probability,
                quality_low=q.adversarial_low if adversarial else q.honest_low,
                quality_high=q.adversarial_high if adversarial else q.honest_high,
                metrics_noise=q.metrics_noise,
                complexity_low=q.complexity_low,
                complexity_high=q.complexity_high,
            )

    # -- phase steps ----------------------------------------------------------

    def _create_intentions(self) -> None:
        cfg = self.config
        deposit = to_micro(cfg.intention.deposit)
        burn = to_micro(cfg.intention.alpha_burn)
        for i, owner in enumerate(self.owners, start=1):
            if self.ledger.balance(owner.id, Token.ALPHA, "free") < burn:
                continue  # burn unaffordable: intention creation blocked
            if self.ledger.balance(owner.id, Token.SUPRA, "free") < deposit:
                continue
            intention = IntentionSpec(
                intention_id=f"int{i}",
                owner=owner,
                predicates=cfg.parsed_predicates(),
                metric_index=cfg.intention.metric_index,
                goal=cfg.parsed_goal(),
                readjust_every=cfg.intention.readjust_every,
                decision_criteria=DecisionCriteria(
                    majority_threshold=cfg.intention.majority_threshold,
                    divergence_tolerance=cfg.intention.divergence_tolerance or None,
                    require_deep_searcher=cfg.intention.require_deep_searcher,
                ),
                deposit=deposit,
                alpha_burn=burn,
            )
            self.ledger.burn_alpha(owner.id, burn)
            self.log.append(
                self.clock.epoch, "burn_event", agent=owner.id, amount=burn,
                intention=intention.intention_id,
            )
            self.ledger.escrow(owner.id, Token.SUPRA, deposit)
            self.intentions[intention.intention_id] = intention
            self.eligible[intention.intention_id] = {}
            self.allocations[intention.intention_id] = {}
            self.log.append(
                self.clock.epoch, "intention",
                intention=intention.intention_id, owner=owner.id, deposit=deposit,
                alpha_burn=burn, metric_index=intention.metric_index,
                goal=intention.goal.value, readjust_every=intention.readjust_every,
                threshold=cfg.intention.majority_threshold,
            )

    def _proposal_step(self) -> None:
        cfg = self.config
        rng = self.streams.get("strategies")
        c_min = to_micro(cfg.protocol.c_min)
        collateral = c_min
        if cfg.market.mechanism == "lmsr":
            collateral = max(c_min, math.ceil(cfg.market.liquidity * math.log(2.0) * MICRO))
        for proposer in self.proposers:
            submission = self.proposer_policies[proposer.id].maybe_submit(rng)
            if submission is None:
                continue
            quality, metrics, complexity = submission
            self._strategy_counter += 1
            strategy = StrategyProposal(
                strategy_id=f"s{self._strategy_counter}",
                proposer=proposer,
                collateral=collateral,
                complexity=complexity,
                metrics_profile=metrics,
                true_quality=quality,
                listed_epoch=self.clock.epoch,
            )
            self.strategies[strategy.strategy_id] = strategy
            self.log.append(
                self.clock.epoch, "strategy", strategy=strategy.strategy_id,
                proposer=proposer.id, collateral=collateral, complexity=complexity,
                quality=quality,
            )
            self._schedule_audits(strategy)
            for intention_id in sorted(self.intentions):
                intention = self.intentions[intention_id]
                if self.ledger.balance(proposer.id, Token.SUPRA, "free") < collateral:
                    break
                self._instance_counter += 1
                instance_id = f"v{self._instance_counter}"
                try:
                    instance = open_validation(
                        instance_id=instance_id,
                        strategy=strategy,
                        intention=intention,
                        proposer_stake=collateral,
                        c_min=c_min,
                        mechanism=cfg.market.mechanism,
                        liquidity=cfg.market.liquidity,
                        ledger=self.ledger,
                        epoch=self.clock.epoch,
                        log=self.log,
                    )
                except WaterfallError:
                    self._instance_counter -= 1
                    continue  # predicate filter rejected the pairing
                strategy.linked_intentions.add(intention_id)
                self.instances[instance_id] = instance

    def _schedule_audits(self, strategy: StrategyProposal) -> None:
        index = int(strategy.strategy_id[1:])
        rng = self.streams.substream("audit", index)
        self.audit_rngs[strategy.strategy_id] = rng
        horizon = (self.config.run.epochs - 1) - strategy.listed_epoch
        if horizon <= 0:
            self.audit_epochs[strategy.strategy_id] = []
            return
        times = sample_audit_events(rng, self.config.audit.rate, float(horizon))
        self.audit_epochs[strategy.strategy_id] = [
            strategy.listed_epoch + math.ceil(t) for t in times
        ]

    def _voting_step(self) -> None:
        for instance_id in sorted(self.instances):
            instance = self.instances[instance_id]
            if instance.state is not InstanceState.MARKET_OPEN:
                continue
            strategy = self.strategies[instance.strategy_id]
            rng = self.streams.get("policy")
            for verifier in self.verifiers:
                policy = self.verifier_policies[verifier.id]
                key = (verifier.id, strategy.strategy_id)
                if key not in self.signals:
                    self.signals[key] = policy.observe(strategy.true_quality, rng)
                decision = policy.decide_vote(strategy.redacted(), self.signals[key], rng)
                if decision is None:
                    continue
                side, stake = decision
                try:
                    cast_vote(
                        instance, verifier, side, stake,
                        phase=self.clock.phase, fee_rate_ppm=self.fee_rate_ppm,
                        ledger=self.ledger, epoch=self.clock.epoch, log=self.log,
                    )
                except WaterfallError:
                    continue  # broke verifiers just sit the round out

    def _resolution_step(self) -> None:
        r_min = to_micro(self.config.protocol.r_min)
        for instance_id in sorted(self.instances):
            instance = self.instances[instance_id]
            if instance.state is not InstanceState.MARKET_OPEN:
                continue
            intention = self.intentions[instance.intention_id]
            decision = resolve_by_criteria(
                instance, intention.decision_criteria, epoch=self.clock.epoch, log=self.log,
                divergence_window=self.config.intention.divergence_window,
            )
            if decision.status is not CriteriaStatus.NEEDS_DEEP_SEARCHER:
                continue
            strategy = self.strategies[instance.strategy_id]
            truth = self._claim_truth(strategy)
            for searcher in self.searchers:
                if self.ledger.balance(searcher.id, Token.ALPHA, "free") < r_min:
                    continue
                outcome = self.searcher_policy.resolve(truth, self.streams.get("policy"))
                deep_searcher_resolve(
                    instance, searcher, r_min, outcome,
                    r_min=r_min, arbitration_window=self.config.protocol.arbitration_window,
                    ledger=self.ledger, epoch=self.clock.epoch, log=self.log,
                )
                break

    def _arbitration_step(self) -> None:
        cfg = self.config
        min_stake = to_micro(cfg.protocol.r_min * cfg.protocol.arbitration_stake_factor)
        for instance_id in sorted(self.instances):
            instance = self.instances[instance_id]
            if instance.state is not InstanceState.ARBITRATION_WINDOW or instance.dispute:
                continue
            deadline = instance.window_deadlines[InstanceState.ARBITRATION_WINDOW]
            if self.clock.epoch >= deadline:
                continue
            strategy = self.strategies[instance.strategy_id]
            truth = self._claim_truth(strategy)
            resolved = instance.resolution.outcome
            for arbitrator in self.arbitrators:
                look_key = (instance_id, arbitrator.id)
                if look_key in self.arb_looked:
                    continue
                self.arb_looked.add(look_key)
                policy_rng = self.streams.get("policy")
                conclusion = self.arbitrator_policy.conclusion(truth, policy_rng)
                if not self.arbitrator_policy.should_challenge(conclusion, resolved, policy_rng):
                    continue
                count = self.participation.get(arbitrator.id, 0)
                if count < cfg.protocol.min_arbitrator_participation:
                    continue
                if self.ledger.balance(arbitrator.id, Token.ALPHA, "free") < min_stake:
                    continue
                disputes_rng = self.streams.get("disputes")
                audit_correct = disputes_rng.random() < cfg.policies.arbitrator_accuracy
                resolution_wrong = resolved is not truth
                upheld = resolution_wrong if audit_correct else not resolution_wrong
                arbitrator_challenge(
                    instance, arbitrator, min_stake, upheld,
                    min_stake=min_stake, participation_count=count,
                    min_participation=cfg.protocol.min_arbitrator_participation,
                    ledger=self.ledger, epoch=self.clock.epoch, log=self.log,
                )
                self.participation[arbitrator.id] = count + 1
                break

    def _settlement_step(self) -> None:
        alpha_reward = to_micro(self.config.protocol.alpha_reward)
        for instance_id in sorted(self.instances):
            instance = self.instances[instance_id]
            if instance.state is InstanceState.SETTLED:
                continue
            if not settlement_due(instance, self.clock.epoch):
                continue
            market = instance.market
            strategy = self.strategies[instance.strategy_id]
            score = confidence_score(market, strategy.strategy_id)
            report = settle_instance(
                instance, epoch=self.clock.epoch, ledger=self.ledger,
                alpha_reward=alpha_reward, eligibility=self._eligibility, log=self.log,
            )
            self.last_validation_epoch[instance.intention_id] = self.clock.epoch
            if report.outcome is Side.AGREE and strategy.strategy_id not in self.fraud_flagged:
                self.eligible[instance.intention_id][strategy.strategy_id] = EligibleRecord(
                    strategy_id=strategy.strategy_id,
                    instance_id=instance_id,
                    omega=score.value,
                    agree_fraction=score.agree_stake_fraction,
                    complexity=strategy.complexity,
                )
                contract = CommissionContract(
                    proposer_id=instance.proposer_id,
                    strategy_id=strategy.strategy_id,
                    intention_id=instance.intention_id,
                    rate=self.config.commission.rate,
                    active=True,
                )
                self.commissions[(strategy.strategy_id, instance.intention_id)] = contract

    def _allocation_step(self) -> None:
        cfg = self.config
        for intention_id in sorted(self.intentions):
            intention = self.intentions[intention_id]
            first_time = intention_id not in self.allocated_once
            if not first_time:
                last = self.last_validation_epoch.get(intention_id, 0)
                if not reopen_intention(intention, last, self.clock.epoch, self.clock.phase):
                    continue
            records = [
                self.eligible[intention_id][sid]
                for sid in sorted(self.eligible[intention_id])
                if sid not in self.fraud_flagged
            ]
            budget = self.ledger.balance(intention.owner.id, Token.SUPRA, "escrowed")
            if not records or budget <= 0:
                self.allocations[intention_id] = {}
                self.log.append(
                    self.clock.epoch, "idle_capital", intention=intention_id, amount=budget
                )
                continue
            eligible = [
                EligibleInstance(
                    strategy_id=r.strategy_id, omega=r.omega,
                    agree_fraction=r.agree_fraction, complexity=r.complexity, env=0.0,
                )
                for r in records
            ]
            result = meta_allocation(
                eligible, budget,
                vote_weight_exponent=cfg.allocation.vote_weight_exponent,
                env_discount_intercept=cfg.allocation.env_discount_intercept,
                env_discount_slope=cfg.allocation.env_discount_slope,
                utility=self.utility, returns=self.returns, cost=self.cost_model,
            )
            if not result:
                # every meta-weight clamped to zero: capital stays idle
                self.allocations[intention_id] = {}
                self.log.append(
                    self.clock.epoch, "idle_capital", intention=intention_id, amount=budget
                )
                continue
            self.allocations[intention_id] = result
            self.allocated_once.add(intention_id)
            self.log.append(
                self.clock.epoch, "allocation_round", intention=intention_id,
                budget=budget, allocated=sum(result.values()),
            )
            omega_by_sid = {r.strategy_id: r.omega for r in records}
            for sid in sorted(result):
                self.log.append(
                    self.clock.epoch, "allocation", intention=intention_id, strategy=sid,
                    amount=result[sid], omega=omega_by_sid[sid],
                )

    def _withdrawal_step(self) -> None:
        cfg = self.config
        rate_ppm = round(cfg.commission.rate * MICRO)
        divert_ppm = round(cfg.commission.divert_fraction * MICRO)
        rng = self.streams.get("returns")
        for intention_id in sorted(self.intentions):
            intention = self.intentions[intention_id]
            owner_id = intention.owner.id
            for sid in sorted(self.allocations.get(intention_id, {})):
                amount = self.allocations[intention_id][sid]
                if amount <= 0:
                    continue
                strategy = self.strategies[sid]
                record = self.eligible[intention_id].get(sid)
                omega = record.omega if record else 0.5
                outcome = realized_value(
                    strategy.true_quality, omega, amount,
                    strategy.metrics_profile, self.returns, rng,
                )
                delta = outcome.delta_v_micro
                if delta > 0:
                    available = self.ledger.pool_balance(EXTERNAL_MARKET, Token.SUPRA)
                    credited = min(delta, available)
                    if credited:
                        self.ledger.transfer(
                            f"p:{EXTERNAL_MARKET}", f"a:{owner_id}:escrowed",
                            Token.SUPRA, credited, op="pnl",
                        )
                elif delta < 0:
                    held = self.ledger.balance(owner_id, Token.SUPRA, "escrowed")
                    debited = min(-delta, held)
                    if debited:
                        self.ledger.transfer(
                            f"a:{owner_id}:escrowed", f"p:{EXTERNAL_MARKET}",
                            Token.SUPRA, debited, op="pnl",
                        )
                self.log.append(
                    self.clock.epoch, "value", intention=intention_id, strategy=sid,
                    allocation=amount, ret=outcome.ret, delta_v=delta,
                )
                contract = self.commissions.get((sid, intention_id))
                if contract is not None and delta > 0:
                    paid, diverted = self.ledger.pay_commission(
                        contract, owner_id, delta, rate_ppm, divert_ppm
                    )
                    if paid or diverted:
                        self.log.append(
                            self.clock.epoch, "commission", strategy=sid,
                            intention=intention_id, proposer=contract.proposer_id,
                            amount=paid, diverted=diverted,
                        )

    def _withdrawal_sweep(self) -> None:
        """Owners take profits: escrow above the working deposit returns to free."""
        for intention_id in sorted(self.intentions):
            intention = self.intentions[intention_id]
            owner_id = intention.owner.id
            held = self.ledger.balance(owner_id, Token.SUPRA, "escrowed")
            surplus = held - intention.deposit
            if surplus > 0:
                self.ledger.unescrow(owner_id, Token.SUPRA, surplus)

    def _audit_step(self) -> None:
        cfg = self.config
        rho_min = to_micro(cfg.protocol.rho_min)
        for sid in sorted(self.strategies):
            due = [e for e in self.audit_epochs.get(sid, []) if e == self.clock.epoch]
            for _ in due:
                strategy = self.strategies[sid]
                eligible_verifiers = [
                    v.id for v in self.verifiers if self.ledger.alpha_total(v.id) >= rho_min
                ]
                pool_balance = self.ledger.pool_balance(LOTTERY_POOL, Token.SUPRA)
                allocation = sum(
                    allocs.get(sid, 0) for allocs in self.allocations.values()
                )
                if not eligible_verifiers:
                    self.log.append(
                        self.clock.epoch, "audit", strategy=sid,
                        outcome=AuditOutcome.STARVED.value, gas=0, reward=0,
                        pool_after=pool_balance,
                    )
                    continue
                result = run_audit(
                    sid, strategy.true_quality, eligible_verifiers, self._is_fraudulent,
                    schedule=self.audit_schedule, pool_balance=pool_balance,
                    allocation=allocation, detection_accuracy=cfg.audit.detection_accuracy,
                    rng=self.audit_rngs[sid], epoch=self.clock.epoch,
                )
                if result.outcome is not AuditOutcome.STARVED:
                    if result.gas:
                        self.ledger.transfer(
                            f"p:{LOTTERY_POOL}", f"p:{FEE_POOL}", Token.SUPRA, result.gas,
                            op="audit_gas",
                        )
                    for verifier_id in sorted(result.rewards):
                        self.ledger.transfer(
                            f"p:{LOTTERY_POOL}", f"a:{verifier_id}:free",
                            Token.SUPRA, result.rewards[verifier_id], op="audit_reward",
                        )
                self.log.append(
                    self.clock.epoch, "audit", strategy=sid, outcome=result.outcome.value,
                    gas=result.gas, reward=result.reward_total,
                    pool_after=self.ledger.pool_balance(LOTTERY_POOL, Token.SUPRA),
                )
                if result.outcome is AuditOutcome.FRAUD_DETECTED:
                    self._apply_fraud_consequences(sid)

    def _apply_fraud_consequences(self, sid: str) -> None:
        if sid in self.fraud_flagged:
            return
        agree_instances = [
            inst for inst in self.instances.values()
            if inst.strategy_id == sid
            and inst.state is InstanceState.SETTLED
            and inst.resolution is not None
            and inst.resolution.outcome is Side.AGREE
        ]
        if not agree_instances:
            return
        self.fraud_flagged.add(sid)
        strategy = self.strategies[sid]
        penalty = min(
            to_micro(self.config.protocol.fraud_penalty),
            self.ledger.balance(strategy.proposer.id, Token.SUPRA, "free"),
        )
        if penalty:
            self.ledger.transfer(
                f"a:{strategy.proposer.id}:free", f"p:{SLASH_POOL}", Token.SUPRA, penalty,
                op="penalty",
            )
            self.log.append(
                self.clock.epoch, "slash_event", agent=strategy.proposer.id,
                token=Token.SUPRA.value, amount=penalty, reason="fraud_detected",
                instance=sorted(i.instance_id for i in agree_instances)[0],
            )
        for instance in sorted(agree_instances, key=lambda i: i.instance_id):
            instance.fraud_flagged = True
            contract = self.commissions.get((sid, instance.intention_id))
            if contract is not None:
                contract.active = False
            self.eligible[instance.intention_id].pop(sid, None)
            if self.allocations.get(instance.intention_id, {}).get(sid):
                self.allocations[instance.intention_id][sid] = 0
            self.log.append(
                self.clock.epoch, "fraud", strategy=sid,
                instance=instance.instance_id, slashed=penalty,
            )
            penalty = 0  # slash once per strategy

    def _lottery_topup_step(self) -> None:
        fraction_ppm = round(self.config.audit.fee_topup_fraction * MICRO)
        if fraction_ppm <= 0:
            return
        fee_balance = self.ledger.pool_balance(FEE_POOL, Token.SUPRA)
        amount = scale_micro(fee_balance, fraction_ppm)
        if amount > 0:
            self.ledger.transfer(
                f"p:{FEE_POOL}", f"p:{LOTTERY_POOL}", Token.SUPRA, amount, op="topup"
            )

    def _alpha_decay_step(self) -> None:
        rate_ppm = round(self.config.protocol.alpha_decay_rate * MICRO)
        if rate_ppm <= 0:
            return
        for agent_id in sorted(self.ledger.alpha):
            decayed = scale_micro(self.ledger.balance(agent_id, Token.ALPHA, "free"), rate_ppm)
            if decayed > 0:
                self.ledger.burn_alpha(agent_id, decayed)

    # -- main loop -------------------------------------------------------------

    def run(self, check_invariants: bool = False) -> RunResult:
        self.setup()
        result = RunResult(seed=self.seed, log=self.log, engine=self)
        for _ in range(self.config.run.epochs):
            epoch = self.clock.epoch
            phase = self.clock.phase
            self.log.append(epoch, "epoch_start", phase=phase.value)
            if phase is Phase.PROPOSAL and self.clock.phase_starts_now:
                if epoch == 0:
                    self._create_intentions()
                self._proposal_step()
            if phase is Phase.ASSESSMENT and self.clock.phase_starts_now:
                self._voting_step()
            if phase is Phase.ASSESSMENT and self.clock.phase_ends_now:
                self._resolution_step()
            self._arbitration_step()
            self._settlement_step()
            if phase is Phase.REBALANCING and self.clock.phase_ends_now:
                self._allocation_step()
            if phase is Phase.WITHDRAWAL and self.clock.phase_starts_now:
                self._withdrawal_step()
            if phase is Phase.WITHDRAWAL and self.clock.phase_ends_now:
                self._withdrawal_sweep()
            self._audit_step()
            self._lottery_topup_step()
            self._alpha_decay_step()
            if check_invariants:
                self.ledger.check_conservation()
            every = self.config.run.snapshot_every
            if every > 0 and epoch % every == 0:
                result.snapshots.append((epoch, self.ledger.snapshot_lines()))
            self.clock = advance_epoch(self.clock)
        return result


def run(config: ScenarioConfig, seed: int | None = None, check_invariants: bool = False) -> RunResult:
    """Execute one simulation; identical (config, seed) gives a byte-identical log."""
    return Engine(config, config.run.seed if seed is None else seed).run(check_invariants)
