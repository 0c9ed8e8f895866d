"""Binary prediction markets: parimutuel staking pools and the LMSR maker.

Parimutuel pools hold integer micro-unit stakes per (voter, side); at
settlement the losing pool is redistributed pro rata to winners on top of
their returned stakes, with largest-remainder rounding so the payout sum
equals the total staked exactly.

The LMSR maker tracks real-valued cumulative share quantities with
liquidity parameter ell. Cost of a trade:

    dC = ell*ln(e^((q_s+dq)/ell) + e^(q_o/ell)) - ell*ln(e^(q_s/ell) + e^(q_o/ell))

computed through a log-sum-exp formulation that stays stable for q/ell up
to at least 1e4. The instantaneous yes-price is logistic in
(q_yes - q_no)/ell, and the maker's worst-case settlement loss over any
trade sequence and either outcome is capped by ell*ln(2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

from .core import ProtocolError
from .fixedpoint import prorate


class MarketError(ProtocolError):
    """Rejected market operation (resolved market, bad amount, empty pool...)."""


class Side(str, Enum):
    AGREE = "agree"
    DISAGREE = "disagree"

    def other(self) -> "Side":
        return Side.DISAGREE if self is Side.AGREE else Side.AGREE


@dataclass
class ParimutuelPool:
    """Binary staking pool; all amounts are integer micro-units."""

    claim_id: str
    stakes: dict[tuple[str, Side], int] = field(default_factory=dict)
    total_agree: int = 0
    total_disagree: int = 0
    outcome: Side | None = None
    belief_history: list[float] = field(default_factory=list)

    @property
    def is_open(self) -> bool:
        return self.outcome is None

    @property
    def total(self) -> int:
        return self.total_agree + self.total_disagree

    def stake(self, voter_id: str, side: Side, amount: int) -> None:
        """Add ``amount`` micro-units on ``side`` for ``voter_id``."""
        if not self.is_open:
            raise MarketError(f"pool {self.claim_id} is resolved")
        if amount <= 0:
            raise MarketError("stake amount must be > 0")
        key = (voter_id, side)
        self.stakes[key] = self.stakes.get(key, 0) + amount
        if side is Side.AGREE:
            self.total_agree += amount
        else:
            self.total_disagree += amount
        self.belief_history.append(self.implied_probability())

    def implied_probability(self) -> float:
        """Crowd-implied probability of the claim: agree / (agree + disagree)."""
        if self.total == 0:
            raise MarketError(f"pool {self.claim_id} is empty; implied probability undefined")
        return self.total_agree / self.total

    def side_total(self, side: Side) -> int:
        return self.total_agree if side is Side.AGREE else self.total_disagree

    def settle(self, outcome: Side) -> dict[str, int]:
        """Resolve the pool and return payouts per voter id.

        Winners receive their own stake back plus a pro-rata share of the
        losing pool; losers receive nothing. If the winning side is empty
        every participant is refunded their own stake (the unique
        conservation-preserving degenerate rule). Payouts sum to the total
        staked exactly.
        """
        if not self.is_open:
            raise MarketError(f"pool {self.claim_id} already resolved")
        winners = [(v, amt) for (v, s), amt in self.stakes.items() if s is outcome]
        losers = [(v, amt) for (v, s), amt in self.stakes.items() if s is not outcome]
        payouts: dict[str, int] = {}
        if not winners:
            for v, amt in losers:
                payouts[v] = payouts.get(v, 0) + amt
        else:
            losing_total = self.side_total(outcome.other())
            shares = prorate(losing_total, [amt for _, amt in winners]) if losing_total else [0] * len(winners)
            for (v, amt), bonus in zip(winners, shares):
                payouts[v] = payouts.get(v, 0) + amt + bonus
            for v, _amt in losers:
                payouts.setdefault(v, 0)
        self.outcome = outcome
        return payouts


def _lse(a: float, b: float) -> float:
    m = a if a > b else b
    return m + math.log(math.exp(a - m) + math.exp(b - m))


@dataclass
class LmsrMarket:
    """Logarithmic market scoring rule maker for one binary claim.

    Buys only: a trader expresses reversal by buying the opposite side.
    ``collected`` accumulates exact float purchase costs; micro-unit
    quantisation for the ledger is the caller's concern.
    """

    claim_id: str
    liquidity: float
    q_yes: float = 0.0
    q_no: float = 0.0
    collected: float = 0.0
    holdings: dict[tuple[str, Side], float] = field(default_factory=dict)
    outcome: Side | None = None
    belief_history: list[float] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.liquidity <= 0:
            raise ValueError("liquidity must be > 0")

    @property
    def is_open(self) -> bool:
        return self.outcome is None

    def cost(self, side: Side, delta_q: float) -> float:
        """Cost of buying ``delta_q`` shares of ``side`` at the current state."""
        if delta_q < 0:
            raise MarketError("delta_q must be >= 0")
        if delta_q == 0:
            return 0.0
        ell = self.liquidity
        if side is Side.AGREE:
            qs, qo = self.q_yes, self.q_no
        else:
            qs, qo = self.q_no, self.q_yes
        return ell * (_lse((qs + delta_q) / ell, qo / ell) - _lse(qs / ell, qo / ell))

    def price(self) -> float:
        """Instantaneous yes-price, strictly inside (0, 1).

        Clamped away from the endpoints at float resolution so the open
        interval survives extreme share imbalances (q/ell >> 1).
        """
        z = (self.q_yes - self.q_no) / self.liquidity
        if z >= 0:
            p = 1.0 / (1.0 + math.exp(-z))
        else:
            e = math.exp(z)
            p = e / (1.0 + e)
        return min(max(p, 1e-15), 1.0 - 1e-15)

    def buy(self, voter_id: str, side: Side, delta_q: float) -> float:
        """Buy shares, returning the exact cost charged."""
        if not self.is_open:
            raise MarketError(f"market {self.claim_id} is resolved")
        if delta_q <= 0:
            raise MarketError("delta_q must be > 0")
        c = self.cost(side, delta_q)
        if side is Side.AGREE:
            self.q_yes += delta_q
        else:
            self.q_no += delta_q
        key = (voter_id, side)
        self.holdings[key] = self.holdings.get(key, 0.0) + delta_q
        self.collected += c
        self.belief_history.append(self.price())
        return c

    def implied_probability(self) -> float:
        return self.price()

    def settle(self, outcome: Side) -> tuple[dict[str, float], float]:
        """Resolve: one token per winning share. Returns (payouts, maker_loss).

        maker_loss = total paid out - collected; bounded by ell*ln(2).
        """
        if not self.is_open:
            raise MarketError(f"market {self.claim_id} already resolved")
        payouts: dict[str, float] = {}
        for (v, s), qty in self.holdings.items():
            if s is outcome and qty > 0:
                payouts[v] = payouts.get(v, 0.0) + qty
        self.outcome = outcome
        maker_loss = sum(payouts.values()) - self.collected
        return payouts, maker_loss


Market = ParimutuelPool | LmsrMarket
