"""Dual-token ledger: SUPRA and Alpha balances with conservation accounting.

Every agent holds three sub-balances per token (free/staked/escrowed for
SUPRA, free/staked/locked for Alpha). Protocol pools (fee, slash, lottery,
subsidy, market escrow, external market) are plain accounts in the same
ledger, so conservation is a single sum:

- SUPRA is never minted or burned after genesis; the sum over all accounts
  is constant. Strategy PnL settles against the ``external_market`` pool so
  realised returns do not create or destroy tokens.
- Alpha circulating supply equals minted_total - burned_total at all times
  (genesis Alpha counts as minted).

Operations are atomic: every precondition is checked before any mutation,
so a rejected operation leaves the ledger bit-identical. Each mutation is
reported through an optional ``on_op`` callback, which is how the engine's
event log captures a replayable record of every balance change.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

from .core import ProtocolError
from .fixedpoint import MICRO


class LedgerError(ProtocolError):
    """Rejected ledger operation; no partial effect."""


class Token(str, Enum):
    SUPRA = "supra"
    ALPHA = "alpha"


# sub-balance names per token
SUPRA_SUBS = ("free", "staked", "escrowed")
ALPHA_SUBS = ("free", "staked", "locked")

# protocol pool accounts
FEE_POOL = "fee_pool"
SLASH_POOL = "slash_pool"
LOTTERY_POOL = "lottery_pool"
SUBSIDY_POOL = "subsidy_pool"
MARKET_ESCROW = "market_escrow"
EXTERNAL_MARKET = "external_market"
POOLS = (FEE_POOL, SLASH_POOL, LOTTERY_POOL, SUBSIDY_POOL, MARKET_ESCROW, EXTERNAL_MARKET)

BURN_SINK = "-"  # pseudo-account for mint sources / burn destinations


class MintReason(str, Enum):
    GENESIS = "genesis"
    VERIFIER_REWARD = "verifier_reward"
    DEEP_SEARCHER_REWARD = "deep_searcher_reward"


@dataclass
class CommissionContract:
    """Performance-linked proposer commission on positive realised value."""

    proposer_id: str
    strategy_id: str
    intention_id: str
    rate: float  # fraction of realised returns, in [0, 1]
    active: bool = False

    def __post_init__(self) -> None:
        if not (0.0 <= self.rate <= 1.0):
            raise ValueError("commission rate must be in [0, 1]")


LedgerOpCallback = Callable[[str, str, str, Token, int], None]
# (op, src, dst, token, amount); src/dst like "a:v1:free", "p:fee_pool" or "-"


@dataclass
class DualLedger:
    supra: dict[str, dict[str, int]] = field(default_factory=dict)
    alpha: dict[str, dict[str, int]] = field(default_factory=dict)
    pools: dict[str, dict[Token, int]] = field(
        default_factory=lambda: {p: {Token.SUPRA: 0, Token.ALPHA: 0} for p in POOLS}
    )
    alpha_minted_total: int = 0
    alpha_burned_total: int = 0
    genesis_supra_total: int = 0
    fee_carry_ppm: int = 0  # running fee remainder, in micro-units of a micro-unit
    on_op: LedgerOpCallback | None = None

    # -- account management ---------------------------------------------------

    def ensure_agent(self, agent_id: str) -> None:
        if agent_id not in self.supra:
            self.supra[agent_id] = {s: 0 for s in SUPRA_SUBS}
            self.alpha[agent_id] = {s: 0 for s in ALPHA_SUBS}

    def genesis(self, agent_id: str, supra_free: int, alpha_free: int) -> None:
        """Create an agent account with initial balances (Alpha counts as minted)."""
        self.ensure_agent(agent_id)
        if supra_free:
            self.supra[agent_id]["free"] += supra_free
            self.genesis_supra_total += supra_free
            self._emit("genesis", BURN_SINK, f"a:{agent_id}:free", Token.SUPRA, supra_free)
        if alpha_free:
            self.alpha[agent_id]["free"] += alpha_free
            self.alpha_minted_total += alpha_free
            self._emit("mint", BURN_SINK, f"a:{agent_id}:free", Token.ALPHA, alpha_free)

    def genesis_pool(self, pool: str, token: Token, amount: int) -> None:
        self._check_pool(pool)
        self.pools[pool][token] += amount
        if token is Token.SUPRA:
            self.genesis_supra_total += amount
        else:
            self.alpha_minted_total += amount
        self._emit("genesis", BURN_SINK, f"p:{pool}", token, amount)

    # -- balance access --------------------------------------------------------

    def balance(self, agent_id: str, token: Token, sub: str) -> int:
        book = self.supra if token is Token.SUPRA else self.alpha
        return book[agent_id][sub]

    def pool_balance(self, pool: str, token: Token) -> int:
        return self.pools[pool][token]

    def alpha_total(self, agent_id: str) -> int:
        """Total Alpha across sub-balances; used as the reputation score."""
        acct = self.alpha.get(agent_id)
        return sum(acct.values()) if acct else 0

    # -- core moves ------------------------------------------------------------

    def stake(self, agent_id: str, token: Token, amount: int) -> None:
        self._move_subs(agent_id, token, "free", "staked", amount, "stake")

    def release(self, agent_id: str, token: Token, amount: int) -> None:
        self._move_subs(agent_id, token, "staked", "free", amount, "release")

    def escrow(self, agent_id: str, token: Token, amount: int) -> None:
        dst = "escrowed" if token is Token.SUPRA else "locked"
        self._move_subs(agent_id, token, "free", dst, amount, "escrow")

    def unescrow(self, agent_id: str, token: Token, amount: int) -> None:
        src = "escrowed" if token is Token.SUPRA else "locked"
        self._move_subs(agent_id, token, src, "free", amount, "unescrow")

    def transfer(self, src: str, dst: str, token: Token, amount: int, op: str = "xfer") -> None:
        """Move between any two account refs ("a:<id>:<sub>" or "p:<pool>")."""
        if amount < 0:
            raise LedgerError("transfer amount must be >= 0")
        if amount == 0:
            return
        self._parse_ref(dst)  # validate before debiting so the op stays atomic
        self._debit_ref(src, token, amount)
        self._credit_ref(dst, token, amount)
        self._emit(op, src, dst, token, amount)

    def slash(self, agent_id: str, token: Token, amount: int, sub: str = "staked") -> None:
        """Forfeit staked/escrowed/locked tokens to the slash pool."""
        book = self.supra if token is Token.SUPRA else self.alpha
        if sub == "free":
            raise LedgerError("cannot slash a free balance")
        if book[agent_id].get(sub, 0) < amount:
            raise LedgerError(
                f"slash of {amount} exceeds {agent_id}'s {token.value}.{sub} balance"
            )
        if amount < 0:
            raise LedgerError("slash amount must be >= 0")
        book[agent_id][sub] -= amount
        self.pools[SLASH_POOL][token] += amount
        self._emit("slash", f"a:{agent_id}:{sub}", f"p:{SLASH_POOL}", token, amount)

    def mint_alpha(self, agent_id: str, amount: int, reason: MintReason, eligible: bool = True) -> None:
        """Mint new Alpha to an eligible recipient's free balance."""
        if not eligible:
            raise LedgerError(f"recipient {agent_id} is not eligible for an Alpha mint")
        if amount <= 0:
            raise LedgerError("mint amount must be > 0")
        self.ensure_agent(agent_id)
        self.alpha[agent_id]["free"] += amount
        self.alpha_minted_total += amount
        self._emit("mint", BURN_SINK, f"a:{agent_id}:free", Token.ALPHA, amount)

    def burn_alpha(self, agent_id: str, amount: int) -> None:
        """Burn Alpha from the owner's free balance (removed from circulation)."""
        if amount <= 0:
            raise LedgerError("burn amount must be > 0")
        if self.alpha.get(agent_id, {}).get("free", 0) < amount:
            raise LedgerError(f"{agent_id} has insufficient free Alpha to burn {amount}")
        self.alpha[agent_id]["free"] -= amount
        self.alpha_burned_total += amount
        self._emit("burn", f"a:{agent_id}:free", BURN_SINK, Token.ALPHA, amount)

    def charge_validation_fee(self, agent_id: str, gross: int, fee_rate_ppm: int) -> tuple[int, int]:
        """Split a gross trade amount into (net, fee); fee goes to the fee pool.

        The fractional part of ``gross * rate`` is carried forward in
        ``fee_carry_ppm`` so that cumulative fees track ``rate * sum(gross)``
        to within one micro-unit at every point (largest-remainder over the
        trade sequence).
        """
        if gross <= 0:
            raise LedgerError("gross trade amount must be > 0")
        raw = gross * fee_rate_ppm + self.fee_carry_ppm
        fee = raw // MICRO
        self.fee_carry_ppm = raw % MICRO
        if fee > gross:
            fee = gross
        net = gross - fee
        if fee:
            self.transfer(f"a:{agent_id}:free", f"p:{FEE_POOL}", Token.SUPRA, fee, op="fee")
        return net, fee

    def pay_commission(
        self,
        contract: CommissionContract,
        owner_id: str,
        delta_v: int,
        rate_ppm: int,
        divert_ppm: int,
    ) -> tuple[int, int]:
        """Pay the proposer's commission on positive realised value.

        Returns (to_proposer, diverted). No commission when the contract is
        inactive or realised value is non-positive. The diverted share is
        channeled to the subsidy pool.
        """
        if not contract.active or delta_v <= 0:
            return 0, 0
        commission = (delta_v * rate_ppm) // MICRO
        if commission == 0:
            return 0, 0
        available = self.supra[owner_id]["escrowed"]
        if available < commission:
            commission = available
        diverted = (commission * divert_ppm) // MICRO
        to_proposer = commission - diverted
        if to_proposer:
            self.transfer(
                f"a:{owner_id}:escrowed", f"a:{contract.proposer_id}:free",
                Token.SUPRA, to_proposer, op="commission",
            )
        if diverted:
            self.transfer(
                f"a:{owner_id}:escrowed", f"p:{SUBSIDY_POOL}",
                Token.SUPRA, diverted, op="commission",
            )
        return to_proposer, diverted

    # -- conservation ----------------------------------------------------------

    def supra_sum(self) -> int:
        total = sum(sum(acct.values()) for acct in self.supra.values())
        total += sum(p[Token.SUPRA] for p in self.pools.values())
        return total

    def alpha_sum(self) -> int:
        total = sum(sum(acct.values()) for acct in self.alpha.values())
        total += sum(p[Token.ALPHA] for p in self.pools.values())
        return total

    def check_conservation(self) -> None:
        """Raise LedgerError if either conservation identity is violated."""
        if self.supra_sum() != self.genesis_supra_total:
            raise LedgerError(
                f"SUPRA conservation violated: sum {self.supra_sum()} != genesis {self.genesis_supra_total}"
            )
        expected = self.alpha_minted_total - self.alpha_burned_total
        if self.alpha_sum() != expected:
            raise LedgerError(
                f"Alpha conservation violated: sum {self.alpha_sum()} != minted-burned {expected}"
            )
        for agent_id, acct in self.supra.items():
            for sub, v in acct.items():
                if v < 0:
                    raise LedgerError(f"negative SUPRA balance {agent_id}.{sub}={v}")
        for agent_id, acct in self.alpha.items():
            for sub, v in acct.items():
                if v < 0:
                    raise LedgerError(f"negative Alpha balance {agent_id}.{sub}={v}")
        for pool, bals in self.pools.items():
            for token, v in bals.items():
                if v < 0:
                    raise LedgerError(f"negative pool balance {pool}.{token.value}={v}")

    def snapshot_lines(self) -> list[str]:
        """One line per non-empty sub-balance: account, token, sub, micro amount."""
        lines = []
        for agent_id in sorted(self.supra):
            for sub in SUPRA_SUBS:
                v = self.supra[agent_id][sub]
                if v:
                    lines.append(f"{agent_id} supra {sub} {v}")
            for sub in ALPHA_SUBS:
                v = self.alpha[agent_id][sub]
                if v:
                    lines.append(f"{agent_id} alpha {sub} {v}")
        for pool in POOLS:
            for token in (Token.SUPRA, Token.ALPHA):
                v = self.pools[pool][token]
                if v:
                    lines.append(f"{pool} {token.value} - {v}")
        return lines

    def state_dict(self) -> dict:
        """Deep-copyable view used by replay-equality checks."""
        return {
            "supra": {a: dict(b) for a, b in self.supra.items()},
            "alpha": {a: dict(b) for a, b in self.alpha.items()},
            "pools": {p: {t.value: v for t, v in b.items()} for p, b in self.pools.items()},
            "minted": self.alpha_minted_total,
            "burned": self.alpha_burned_total,
        }

    # -- internals ---------------------------------------------------------

    def _check_pool(self, pool: str) -> None:
        if pool not in self.pools:
            raise LedgerError(f"unknown pool account {pool!r}")

    def _move_subs(self, agent_id: str, token: Token, src: str, dst: str, amount: int, op: str) -> None:
        if amount <= 0:
            raise LedgerError(f"{op} amount must be > 0")
        book = self.supra if token is Token.SUPRA else self.alpha
        acct = book.get(agent_id)
        if acct is None:
            raise LedgerError(f"unknown agent {agent_id!r}")
        if acct[src] < amount:
            raise LedgerError(
                f"{op} of {amount} exceeds {agent_id}'s {token.value}.{src} balance {acct[src]}"
            )
        acct[src] -= amount
        acct[dst] += amount
        self._emit(op, f"a:{agent_id}:{src}", f"a:{agent_id}:{dst}", token, amount)

    def _parse_ref(self, ref: str) -> tuple[str, ...]:
        parts = ref.split(":")
        if parts[0] == "a" and len(parts) == 3:
            return ("a", parts[1], parts[2])
        if parts[0] == "p" and len(parts) == 2:
            self._check_pool(parts[1])
            return ("p", parts[1])
        raise LedgerError(f"bad account ref {ref!r}")

    def _debit_ref(self, ref: str, token: Token, amount: int) -> None:
        parsed = self._parse_ref(ref)
        if parsed[0] == "a":
            _, agent_id, sub = parsed
            book = self.supra if token is Token.SUPRA else self.alpha
            acct = book.get(agent_id)
            if acct is None or sub not in acct:
                raise LedgerError(f"unknown account {ref!r}")
            if acct[sub] < amount:
                raise LedgerError(f"insufficient balance at {ref}: {acct[sub]} < {amount}")
            acct[sub] -= amount
        else:
            pool = parsed[1]
            if self.pools[pool][token] < amount:
                raise LedgerError(f"insufficient pool balance at {ref}: {self.pools[pool][token]} < {amount}")
            self.pools[pool][token] -= amount

    def _credit_ref(self, ref: str, token: Token, amount: int) -> None:
        parsed = self._parse_ref(ref)
        if parsed[0] == "a":
            _, agent_id, sub = parsed
            self.ensure_agent(agent_id)
            book = self.supra if token is Token.SUPRA else self.alpha
            if sub not in book[agent_id]:
                raise LedgerError(f"unknown sub-balance in {ref!r}")
            book[agent_id][sub] += amount
        else:
            self.pools[parsed[1]][token] += amount

    def _emit(self, op: str, src: str, dst: str, token: Token, amount: int) -> None:
        if self.on_op is not None:
            self.on_op(op, src, dst, token, amount)
