"""Event-log verification: replay every record and check every invariant.

``replay_log`` folds the primitive ledger records into balances and the
transition records into instance states — the same pure fold the engine's
correctness contract promises. ``verify_log`` layers the protocol checks on
top: double-entry conservation, legal state transitions, single settlement,
payout sums, the LMSR loss bound, slashing exclusivity with matching ledger
credits, mint matching, allocation feasibility, and silence after
settlement. Violations come back as strings; an empty list is a pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from ..events import Event, EventLog
from ..waterfall import ALLOWED_TRANSITIONS, InstanceState

_TRANSITIONS = {(a.value, b.value) for a, b in ALLOWED_TRANSITIONS}


_SUPRA_SUBS = ("free", "staked", "escrowed")
_ALPHA_SUBS = ("free", "staked", "locked")
_POOL_NAMES = (
    "fee_pool", "slash_pool", "lottery_pool", "subsidy_pool", "market_escrow", "external_market",
)


@dataclass
class ReplayState:
    supra: dict[str, dict[str, int]] = field(default_factory=dict)
    alpha: dict[str, dict[str, int]] = field(default_factory=dict)
    pools: dict[str, dict[str, int]] = field(
        default_factory=lambda: {p: {"supra": 0, "alpha": 0} for p in _POOL_NAMES}
    )
    minted: int = 0
    burned: int = 0
    genesis_supra: int = 0
    instance_states: dict[str, str] = field(default_factory=dict)
    epoch: int = 0

    def state_dict(self) -> dict:
        return {
            "supra": {a: dict(b) for a, b in self.supra.items()},
            "alpha": {a: dict(b) for a, b in self.alpha.items()},
            "pools": {p: dict(b) for p, b in self.pools.items()},
            "minted": self.minted,
            "burned": self.burned,
        }

    def supra_sum(self) -> int:
        total = sum(sum(acct.values()) for acct in self.supra.values())
        return total + sum(b.get("supra", 0) for b in self.pools.values())

    def alpha_sum(self) -> int:
        total = sum(sum(acct.values()) for acct in self.alpha.values())
        return total + sum(b.get("alpha", 0) for b in self.pools.values())


def _account(state: ReplayState, token: str, agent: str) -> dict[str, int]:
    book = state.supra if token == "supra" else state.alpha
    if agent not in book:
        state.supra[agent] = {s: 0 for s in _SUPRA_SUBS}
        state.alpha[agent] = {s: 0 for s in _ALPHA_SUBS}
    return book[agent]


def _apply_ledger_row(state: ReplayState, ev: Event, violations: list[str]) -> None:
    token = ev.token
    amount = ev.amount
    if amount < 0:
        violations.append(f"seq {ev.seq}: negative ledger amount")
        return

    def credit(ref: str) -> None:
        if ref == "-":
            return
        parts = ref.split(":")
        if parts[0] == "a":
            _account(state, token, parts[1])[parts[2]] += amount
        else:
            state.pools.setdefault(parts[1], {})[token] = (
                state.pools.setdefault(parts[1], {}).get(token, 0) + amount
            )

    def debit(ref: str) -> None:
        if ref == "-":
            return
        parts = ref.split(":")
        if parts[0] == "a":
            acct = _account(state, token, parts[1])
            acct[parts[2]] -= amount
            if acct[parts[2]] < 0:
                violations.append(f"seq {ev.seq}: negative balance at {ref}")
        else:
            bals = state.pools.setdefault(parts[1], {})
            bals[token] = bals.get(token, 0) - amount
            if bals[token] < 0:
                violations.append(f"seq {ev.seq}: negative pool balance at {ref}")

    if ev.op == "genesis":
        credit(ev.dst)
        if token == "supra":
            state.genesis_supra += amount
        else:
            state.minted += amount
    elif ev.op == "mint":
        credit(ev.dst)
        state.minted += amount
    elif ev.op == "burn":
        debit(ev.src)
        state.burned += amount
    else:
        debit(ev.src)
        credit(ev.dst)


def replay_log(log: EventLog, until: int | None = None) -> ReplayState:
    """Reconstruct ledger balances and instance states by folding the log."""
    state = ReplayState()
    violations: list[str] = []
    for ev in log:
        if until is not None and ev.epoch > until:
            break
        state.epoch = ev.epoch
        if ev.kind == "ledger":
            _apply_ledger_row(state, ev, violations)
        elif ev.kind == "instance_open":
            state.instance_states[ev.instance] = InstanceState.INITIATED.value
        elif ev.kind == "transition":
            state.instance_states[ev.instance] = ev.dst
    return state


def verify_log(log: EventLog) -> list[str]:
    """Replay the log and check every module invariant; returns violations."""
    violations: list[str] = []
    state = ReplayState()

    instance_meta: dict[str, dict] = {}
    strategy_collateral: dict[str, int] = {}
    trade_net: dict[str, int] = {}
    payout_sum: dict[str, int] = {}
    settle_ev: dict[str, Event] = {}
    ds_stakes: dict[str, Event] = {}
    challenges: dict[str, Event] = {}
    slash_events: list[Event] = []
    mint_events: list[Event] = []
    ledger_rows: list[Event] = []
    alloc_rounds: list[Event] = []
    alloc_by_key: dict[tuple[int, str], int] = {}

    last_epoch = -1
    last_seq = -1
    for ev in log:
        if ev.seq <= last_seq:
            violations.append(f"seq {ev.seq}: sequence numbers must strictly increase")
        last_seq = ev.seq
        if ev.epoch < last_epoch:
            violations.append(f"seq {ev.seq}: epoch went backwards")
        last_epoch = max(last_epoch, ev.epoch)

        if ev.kind == "ledger":
            _apply_ledger_row(state, ev, violations)
            ledger_rows.append(ev)
        elif ev.kind == "strategy":
            strategy_collateral[ev.strategy] = ev.collateral
        elif ev.kind == "instance_open":
            instance_meta[ev.instance] = {
                "strategy": ev.strategy, "mechanism": ev.mechanism,
                "seed": ev.seed_stake, "liquidity": ev.liquidity,
            }
            state.instance_states[ev.instance] = InstanceState.INITIATED.value
            trade_net[ev.instance] = 0
            if ev.strategy in strategy_collateral and ev.seed_stake != strategy_collateral[ev.strategy]:
                violations.append(
                    f"{ev.instance}: seed stake {ev.seed_stake} != proposer collateral "
                    f"{strategy_collateral[ev.strategy]}"
                )
        elif ev.kind == "transition":
            current = state.instance_states.get(ev.instance)
            if current is None:
                violations.append(f"{ev.instance}: transition before instance_open")
            else:
                if current != ev.src:
                    violations.append(
                        f"{ev.instance}: transition source {ev.src} but state is {current}"
                    )
                if (ev.src, ev.dst) not in _TRANSITIONS:
                    violations.append(f"{ev.instance}: illegal transition {ev.src} -> {ev.dst}")
                if current == InstanceState.SETTLED.value:
                    violations.append(f"{ev.instance}: transition after settlement")
            state.instance_states[ev.instance] = ev.dst
        elif ev.kind == "trade":
            if state.instance_states.get(ev.instance) == InstanceState.SETTLED.value:
                violations.append(f"{ev.instance}: trade after settlement")
            trade_net[ev.instance] = trade_net.get(ev.instance, 0) + ev.net
        elif ev.kind == "ds_stake":
            ds_stakes[ev.instance] = ev
        elif ev.kind == "challenge":
            if ev.instance in challenges:
                violations.append(f"{ev.instance}: more than one challenge")
            challenges[ev.instance] = ev
        elif ev.kind == "slash_event":
            slash_events.append(ev)
        elif ev.kind == "mint_event":
            mint_events.append(ev)
        elif ev.kind == "settle":
            if ev.instance in settle_ev:
                violations.append(f"{ev.instance}: instance settled twice")
            settle_ev[ev.instance] = ev
            payout_sum.setdefault(ev.instance, 0)
        elif ev.kind == "payout":
            payout_sum[ev.instance] = payout_sum.get(ev.instance, 0) + ev.amount
        elif ev.kind == "allocation_round":
            alloc_rounds.append(ev)
        elif ev.kind == "allocation":
            key = (ev.epoch, ev.intention)
            alloc_by_key[key] = alloc_by_key.get(key, 0) + ev.amount
            if ev.amount < 0:
                violations.append(f"{ev.intention}: negative allocation to {ev.strategy}")

    # settlement bookkeeping per instance
    for instance_id, ev in settle_ev.items():
        meta = instance_meta.get(instance_id)
        if meta is None:
            violations.append(f"{instance_id}: settle without instance_open")
            continue
        if state.instance_states.get(instance_id) != InstanceState.SETTLED.value:
            violations.append(f"{instance_id}: settle event without settled state")
        if meta["mechanism"] == "parimutuel":
            expected_pool = meta["seed"] + trade_net.get(instance_id, 0)
            if ev.pool_total != expected_pool:
                violations.append(
                    f"{instance_id}: pool total {ev.pool_total} != seed+trades {expected_pool}"
                )
            if payout_sum.get(instance_id, 0) != ev.pool_total:
                violations.append(
                    f"{instance_id}: parimutuel conservation broken — payouts "
                    f"{payout_sum.get(instance_id, 0)} != pool {ev.pool_total}"
                )
        else:
            bound = math.ceil(meta["liquidity"] * math.log(2.0) * 10**6) + 1
            if ev.maker_loss > bound:
                violations.append(
                    f"{instance_id}: LMSR maker loss {ev.maker_loss} exceeds bound {bound}"
                )

    # slashing exclusivity and ledger matching (one ledger credit per slash event)
    slash_budget: dict[tuple, int] = {}
    for r in ledger_rows:
        if r.op in ("slash", "penalty") and r.dst == "p:slash_pool":
            agent = r.src.split(":")[1]
            key = (r.epoch, agent, r.token, r.amount)
            slash_budget[key] = slash_budget.get(key, 0) + 1
    for sev in slash_events:
        key = (sev.epoch, sev.agent, sev.token, sev.amount)
        if slash_budget.get(key, 0) <= 0:
            violations.append(
                f"{sev.instance}: slash of {sev.agent} has no matching ledger credit"
            )
        else:
            slash_budget[key] -= 1
    for instance_id, ch in challenges.items():
        related = [
            sev for sev in slash_events
            if sev.instance == instance_id
            and sev.reason in ("challenge_upheld", "challenge_failed")
        ]
        if len(related) != 1:
            violations.append(
                f"{instance_id}: expected exactly one slash in the dispute, saw {len(related)}"
            )
            continue
        sev = related[0]
        ds = ds_stakes.get(instance_id)
        if ch.upheld:
            if ds is None or sev.agent != ds.searcher or sev.reason != "challenge_upheld":
                violations.append(f"{instance_id}: upheld challenge must slash the deep searcher")
        else:
            if sev.agent != ch.arbitrator or sev.reason != "challenge_failed":
                violations.append(f"{instance_id}: failed challenge must slash the arbitrator")

    mint_budget: dict[tuple, int] = {}
    for r in ledger_rows:
        if r.op == "mint":
            key = (r.epoch, r.dst, r.amount)
            mint_budget[key] = mint_budget.get(key, 0) + 1
    for mev in mint_events:
        key = (mev.epoch, f"a:{mev.agent}:free", mev.amount)
        if mint_budget.get(key, 0) <= 0:
            violations.append(f"mint to {mev.agent} at epoch {mev.epoch} has no ledger record")
        else:
            mint_budget[key] -= 1

    # lottery pool accounting: outflows equal the per-audit fee+reward sums
    audit_cost = sum(
        ev.gas + ev.reward for ev in log.of_kind("audit") if ev.outcome != "starved"
    )
    lottery_outflow = sum(
        r.amount for r in ledger_rows
        if r.op in ("audit_gas", "audit_reward") and r.src == "p:lottery_pool"
    )
    if audit_cost != lottery_outflow:
        violations.append(
            f"lottery accounting broken: audits cost {audit_cost}, pool paid {lottery_outflow}"
        )

    for ev in alloc_rounds:
        total = alloc_by_key.get((ev.epoch, ev.intention), 0)
        if total != ev.allocated:
            violations.append(
                f"{ev.intention}: allocation rows sum to {total}, round says {ev.allocated}"
            )
        if ev.allocated != ev.budget:
            violations.append(
                f"{ev.intention}: allocated {ev.allocated} != budget {ev.budget} (infeasible)"
            )

    # global conservation
    if state.supra_sum() != state.genesis_supra:
        violations.append(
            f"SUPRA conservation broken: sum {state.supra_sum()} != genesis {state.genesis_supra}"
        )
    if state.alpha_sum() != state.minted - state.burned:
        violations.append(
            f"Alpha conservation broken: sum {state.alpha_sum()} != minted-burned "
            f"{state.minted - state.burned}"
        )
    return violations
