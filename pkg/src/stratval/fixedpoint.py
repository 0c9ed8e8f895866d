"""Fixed-point token arithmetic.

All token amounts in the ledger and markets are integers denominated in
micro-units (10**-6 of a token). Pro-rata splits use largest-remainder
rounding so that the distributed parts always sum to the total exactly,
which is what makes conservation checks exact rather than approximate.
"""

from __future__ import annotations

from decimal import Decimal, ROUND_HALF_EVEN
from typing import Sequence

MICRO = 10**6


def to_micro(amount: float | int | str) -> int:
    """Convert a token amount to integer micro-units (round half even)."""
    d = Decimal(str(amount)) * MICRO
    return int(d.quantize(Decimal(1), rounding=ROUND_HALF_EVEN))


def from_micro(amount: int) -> float:
    return amount / MICRO


def scale_micro(amount: int, rate_ppm: int) -> int:
    """amount * rate, with rate expressed in parts-per-million; truncates."""
    if rate_ppm < 0:
        raise ValueError("rate_ppm must be >= 0")
    return (amount * rate_ppm) // MICRO


def prorate(total: int, weights: Sequence[int]) -> list[int]:
    """Split ``total`` micro-units proportionally to ``weights``.

    Largest-remainder rounding: every part is floor(share) plus at most one
    extra micro-unit, remainders assigned in descending order (ties broken
    by lowest index, so the split is deterministic). The parts always sum
    to ``total`` exactly.
    """
    if total < 0:
        raise ValueError("total must be >= 0")
    if not weights:
        raise ValueError("weights must be non-empty")
    if any(w < 0 for w in weights):
        raise ValueError("weights must be >= 0")
    denom = sum(weights)
    if denom == 0:
        raise ValueError("weights must not all be zero")
    base = [total * w // denom for w in weights]
    remainders = [(total * w) % denom for w in weights]
    leftover = total - sum(base)
    # leftover < len(weights); hand out one unit per largest remainder
    order = sorted(range(len(weights)), key=lambda i: (-remainders[i], i))
    for i in order[:leftover]:
        base[i] += 1
    return base


def prorate_float(total: int, weights: Sequence[float]) -> list[int]:
    """Largest-remainder split of ``total`` micro-units over float weights."""
    if not weights:
        raise ValueError("weights must be non-empty")
    if any(w < 0 for w in weights):
        raise ValueError("weights must be >= 0")
    denom = sum(weights)
    if denom <= 0:
        raise ValueError("weights must not all be zero")
    shares = [total * w / denom for w in weights]
    base = [int(s) for s in shares]
    remainders = [s - b for s, b in zip(shares, base)]
    leftover = total - sum(base)
    order = sorted(range(len(weights)), key=lambda i: (-remainders[i], i))
    for i in order[:leftover]:
        base[i] += 1
    return base
