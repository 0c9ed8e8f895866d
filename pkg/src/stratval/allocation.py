"""Budget-constrained capital allocation over validated strategies.

The allocator maximises expected utility net of verification costs,

    max_A  sum_i E[U(r_i * A_i) | omega_i] - Phi_i(A_i)
    s.t.   sum_i A_i = C,  A_i >= 0

by projected gradient ascent on the simplex from a deterministic uniform
start. Supported utilities (linear, mean-variance, log-wealth) keep the
objective concave, so the fixed schedule converges to the global optimum;
log-wealth expectations use a fixed 64-node Gauss-Hermite quadrature and
the gradient is the exact derivative of that discretisation.

Returned allocations are quantised to micro-units with largest-remainder
rounding, so feasibility (sum == budget) is exact, not approximate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .core import ProtocolError
from .fixedpoint import MICRO, prorate_float
from .markets import Market, ParimutuelPool


class AllocationError(ProtocolError):
    pass


class ConfidenceSource(str, Enum):
    PARIMUTUEL = "parimutuel"
    LMSR = "lmsr"
    DEFAULT = "default"


@dataclass(frozen=True)
class ConfidenceScore:
    strategy_id: str
    value: float
    source: ConfidenceSource
    agree_stake_fraction: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.value <= 1.0):
            raise AllocationError("confidence must be in [0, 1]")


def confidence_score(market: Market, strategy_id: str) -> ConfidenceScore:
    """Market-derived belief that the strategy satisfies its intention.

    Parimutuel pools report the stake ratio, LMSR markets the instantaneous
    price; an empty pool is uninformative and defaults to 0.5.
    """
    if isinstance(market, ParimutuelPool):
        if market.total == 0:
            return ConfidenceScore(strategy_id, 0.5, ConfidenceSource.DEFAULT, 0.5)
        p = market.implied_probability()
        return ConfidenceScore(strategy_id, p, ConfidenceSource.PARIMUTUEL, p)
    q_total = market.q_yes + market.q_no
    frac = market.q_yes / q_total if q_total > 0 else 0.5
    return ConfidenceScore(strategy_id, market.price(), ConfidenceSource.LMSR, frac)


@dataclass(frozen=True)
class VerificationCostModel:
    """Phi(A) = base_fee + marginal_rate * complexity**complexity_exponent * A."""

    base_fee: float = 0.0
    marginal_rate: float = 0.0
    complexity_exponent: float = 1.0

    def __post_init__(self) -> None:
        if self.marginal_rate < 0:
            raise AllocationError("marginal_rate must be >= 0 (cost non-decreasing in A)")
        if self.complexity_exponent < 0:
            raise AllocationError("complexity_exponent must be >= 0")

    def slope(self, complexity: float) -> float:
        return self.marginal_rate * complexity**self.complexity_exponent


def verification_cost(model: VerificationCostModel, allocation: float, complexity: float) -> float:
    if allocation < 0:
        raise AllocationError("allocation must be >= 0")
    return model.base_fee + model.slope(complexity) * allocation


class UtilityKind(str, Enum):
    LINEAR = "linear"
    LOG_WEALTH = "log_wealth"
    MEAN_VARIANCE = "mean_variance"


@dataclass(frozen=True)
class UtilityModel:
    """Allocator preference over realised value; concave for the risk-averse kinds."""

    kind: UtilityKind = UtilityKind.LINEAR
    risk_aversion: float = 0.0
    metric_weights: tuple[float, ...] = (1.0, 0.0, 0.0, 0.0)
    wealth_scale: float | None = None  # log-wealth reference; defaults to the budget

    def __post_init__(self) -> None:
        if self.risk_aversion < 0:
            raise AllocationError("risk_aversion must be >= 0")
        if self.wealth_scale is not None and self.wealth_scale <= 0:
            raise AllocationError("wealth_scale must be > 0")

    def realized(self, value_vector: tuple[float, ...]) -> float:
        """Utility of a realised metric vector (reporting path)."""
        n = min(len(self.metric_weights), len(value_vector))
        scalar = sum(self.metric_weights[i] * value_vector[i] for i in range(n))
        if self.kind is UtilityKind.LOG_WEALTH:
            w = self.wealth_scale or 1.0
            return math.log(max(1e-12, 1.0 + scalar / w))
        return scalar


@dataclass(frozen=True)
class ReturnModel:
    """Per-epoch return posterior: Gaussian around an affine map of quality.

    The sampler's mean mixes the market belief and the latent quality with
    ``confidence_coupling``; the allocator-side posterior sees only the
    belief (it must not read the latent quality).
    """

    mean_intercept: float = -0.1
    mean_slope: float = 0.4
    noise_scale: float = 0.05
    confidence_coupling: float = 0.5

    def __post_init__(self) -> None:
        if self.noise_scale <= 0:
            raise AllocationError("noise_scale must be > 0")
        if not (0.0 <= self.confidence_coupling <= 1.0):
            raise AllocationError("confidence_coupling must be in [0, 1]")

    def quality_mean(self, q: float) -> float:
        return self.mean_intercept + self.mean_slope * q

    def posterior_mean(self, omega: float) -> float:
        return self.quality_mean(omega)

    def realized_mean(self, true_quality: float, omega: float) -> float:
        c = self.confidence_coupling
        return c * self.quality_mean(omega) + (1.0 - c) * self.quality_mean(true_quality)


_GH_NODES, _GH_WEIGHTS = np.polynomial.hermite.hermgauss(64)
_GH_WEIGHTS = _GH_WEIGHTS / math.sqrt(math.pi)
_LOG_FLOOR = 1e-12


def _log_wealth_terms(mu: float, sigma: float, wealth: float) -> tuple[np.ndarray, np.ndarray]:
    r = mu + math.sqrt(2.0) * sigma * _GH_NODES
    return r, _GH_WEIGHTS


def _expected_utility(
    omega: float, allocation: float, utility: UtilityModel, returns: ReturnModel, wealth: float
) -> float:
    mu = returns.posterior_mean(omega)
    sigma = returns.noise_scale
    if utility.kind is UtilityKind.LINEAR:
        return mu * allocation
    if utility.kind is UtilityKind.MEAN_VARIANCE:
        return mu * allocation - 0.5 * utility.risk_aversion * (sigma * allocation) ** 2
    r, wt = _log_wealth_terms(mu, sigma, wealth)
    arg = np.maximum(_LOG_FLOOR, 1.0 + r * allocation / wealth)
    return float(np.dot(wt, np.log(arg)))


def _utility_gradient(
    omega: float, allocation: float, utility: UtilityModel, returns: ReturnModel, wealth: float
) -> float:
    mu = returns.posterior_mean(omega)
    sigma = returns.noise_scale
    if utility.kind is UtilityKind.LINEAR:
        return mu
    if utility.kind is UtilityKind.MEAN_VARIANCE:
        return mu - utility.risk_aversion * sigma**2 * allocation
    r, wt = _log_wealth_terms(mu, sigma, wealth)
    arg = 1.0 + r * allocation / wealth
    inside = arg > _LOG_FLOOR
    return float(np.dot(wt[inside], (r[inside] / wealth) / arg[inside]))


def expected_net_utility(
    omega: float,
    allocation: float,
    *,
    utility: UtilityModel,
    returns: ReturnModel,
    cost: VerificationCostModel,
    complexity: float,
    wealth_scale: float | None = None,
) -> float:
    """E[U(r*A) | omega] - Phi(A) for one strategy.

    Linear and mean-variance expectations are closed form under the
    Gaussian return posterior; log-wealth uses the fixed quadrature.
    """
    if allocation < 0:
        raise AllocationError("allocation must be >= 0")
    wealth = wealth_scale or utility.wealth_scale or 1.0
    eu = _expected_utility(omega, allocation, utility, returns, wealth)
    return eu - verification_cost(cost, allocation, complexity)


def net_utility_gradient(
    omega: float,
    allocation: float,
    *,
    utility: UtilityModel,
    returns: ReturnModel,
    cost: VerificationCostModel,
    complexity: float,
    wealth_scale: float | None = None,
) -> float:
    """d/dA of :func:`expected_net_utility`; exact for the discretised objective."""
    wealth = wealth_scale or utility.wealth_scale or 1.0
    return _utility_gradient(omega, allocation, utility, returns, wealth) - cost.slope(complexity)


@dataclass(frozen=True)
class StrategyEntry:
    """One candidate in an allocation problem."""

    strategy_id: str
    omega: float
    complexity: float
    tilt: float = 1.0  # utility multiplier used by the meta-allocation weighting


@dataclass
class AllocationResult:
    entries: tuple[StrategyEntry, ...]
    amounts: list[float]  # SUPRA units
    amounts_micro: list[int]
    objective: float
    iterations: int

    def by_strategy(self) -> dict[str, int]:
        return {e.strategy_id: a for e, a in zip(self.entries, self.amounts_micro)}


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {x >= 0, sum x = 1} (sort-based, O(n log n))."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    rho_candidates = u + (1.0 - css) / np.arange(1, len(v) + 1)
    rho = np.nonzero(rho_candidates > 0)[0][-1]
    lam = (1.0 - css[rho]) / (rho + 1.0)
    return np.maximum(v + lam, 0.0)


def _objective_and_grad(
    x: np.ndarray,
    budget: float,
    entries: tuple[StrategyEntry, ...],
    utility: UtilityModel,
    returns: ReturnModel,
    cost: VerificationCostModel,
    wealth: float,
):
    f = 0.0
    g = np.empty(len(entries))
    for i, e in enumerate(entries):
        a = budget * x[i]
        f += e.tilt * _expected_utility(e.omega, a, utility, returns, wealth)
        f -= verification_cost(cost, a, e.complexity)
        g[i] = budget * (
            e.tilt * _utility_gradient(e.omega, a, utility, returns, wealth)
            - cost.slope(e.complexity)
        )
    return f, g


def solve_allocation(
    budget_micro: int,
    entries: list[StrategyEntry] | tuple[StrategyEntry, ...],
    *,
    utility: UtilityModel,
    returns: ReturnModel,
    cost: VerificationCostModel,
    init: np.ndarray | None = None,
    max_iters: int = 2000,
    tol: float = 1e-14,
) -> AllocationResult:
    """Maximise aggregate expected net utility over the budget simplex.

    Deterministic: uniform initial split (unless an explicit ``init`` simplex
    point is given), Armijo backtracking with a doubling step recovery, and
    largest-remainder quantisation of the final point — the returned
    micro-unit amounts always sum to ``budget_micro`` exactly.
    """
    if budget_micro <= 0:
        raise AllocationError("budget must be > 0")
    if not entries:
        raise AllocationError("at least one strategy is required")
    entries = tuple(entries)
    n = len(entries)
    budget = budget_micro / MICRO
    wealth = utility.wealth_scale or budget

    x = np.full(n, 1.0 / n) if init is None else np.asarray(init, dtype=float)
    if abs(x.sum() - 1.0) > 1e-9 or (x < -1e-12).any():
        raise AllocationError("init must lie on the simplex")
    x = project_simplex(x)

    fx, g = _objective_and_grad(x, budget, entries, utility, returns, cost, wealth)
    step = 1.0 / (1.0 + float(np.max(np.abs(g))))
    iterations = 0
    for iterations in range(1, max_iters + 1):
        step = min(step * 4.0, 1e12)
        moved = False
        while True:
            xn = project_simplex(x + step * g)
            fn, gn = _objective_and_grad(xn, budget, entries, utility, returns, cost, wealth)
            direction = float(np.dot(g, xn - x))
            if fn >= fx + 1e-4 * direction and fn >= fx - tol * (1.0 + abs(fx)):
                moved = fn > fx or float(np.abs(xn - x).max()) > 0
                break
            step *= 0.5
            if step < 1e-18:
                xn, fn, gn = x, fx, g
                break
        delta = float(np.abs(xn - x).max())
        x, fx, g = xn, fn, gn
        if not moved or delta < 1e-13:
            break

    micro = prorate_float(budget_micro, x.tolist()) if n > 1 else [budget_micro]
    return AllocationResult(
        entries=entries,
        amounts=[m / MICRO for m in micro],
        amounts_micro=micro,
        objective=fx,
        iterations=iterations,
    )


@dataclass(frozen=True)
class EligibleInstance:
    """Agree-settled instance feeding the meta-allocation for one intention."""

    strategy_id: str
    omega: float
    agree_fraction: float
    complexity: float
    env: float = 0.0  # exogenous context scalar (e.g. volatility)


def meta_allocation(
    eligible: list[EligibleInstance],
    budget_micro: int,
    *,
    vote_weight_exponent: float,
    env_discount_intercept: float = 1.0,
    env_discount_slope: float = 0.0,
    utility: UtilityModel,
    returns: ReturnModel,
    cost: VerificationCostModel,
) -> dict[str, int]:
    """Split an intention's deposit across its validated strategies.

    Weights ``w_i = omega_i * agree_fraction_i**eta * g(env_i)`` (g affine,
    clamped at zero) seed the optimiser start point, and the non-belief
    factor tilts each strategy's utility term, so broader community
    consensus earns strictly more capital, all else equal. With eta = 0 and
    g identically 1 this reduces to the plain budget solve over the
    confidence scores. Returns an empty dict (idle capital) when nothing is
    eligible or every weight clamps to zero.
    """
    if not eligible:
        return {}
    weights = []
    tilts = []
    for e in eligible:
        gval = max(0.0, env_discount_intercept + env_discount_slope * e.env)
        tilt = e.agree_fraction**vote_weight_exponent * gval
        tilts.append(tilt)
        weights.append(e.omega * tilt)
    total_w = sum(weights)
    if total_w <= 0:
        return {}
    entries = [
        StrategyEntry(e.strategy_id, e.omega, e.complexity, tilt=t)
        for e, t in zip(eligible, tilts)
    ]
    # exact reduction to the plain solve when the weighting is degenerate
    init = None if all(t == 1.0 for t in tilts) else np.array([w / total_w for w in weights])
    result = solve_allocation(
        budget_micro, entries, utility=utility, returns=returns, cost=cost, init=init
    )
    return result.by_strategy()


def rolling_horizon_step(
    budget_micro: int,
    entries: list[StrategyEntry],
    *,
    discount: float,
    lookahead: int = 1,
    utility: UtilityModel,
    returns: ReturnModel,
    cost: VerificationCostModel,
) -> AllocationResult:
    """One step of the rolling-horizon allocation.

    Myopic certainty-equivalent: the multi-epoch objective is solved one
    epoch at a time with current posteriors, so the discount factor is
    validated but inert at lookahead 1 (deeper stochastic lookahead is
    intentionally not modelled).
    """
    if not (0.0 < discount < 1.0):
        raise AllocationError("discount must be in (0, 1)")
    if lookahead < 1:
        raise AllocationError("lookahead must be >= 1")
    return solve_allocation(budget_micro, entries, utility=utility, returns=returns, cost=cost)


@dataclass(frozen=True)
class RealizedValue:
    ret: float
    delta_v_micro: int
    vector: tuple[float, ...]


def realized_value(
    true_quality: float,
    omega: float,
    allocation_micro: int,
    metrics_profile: tuple[float, ...],
    returns: ReturnModel,
    rng: np.random.Generator,
) -> RealizedValue:
    """Sample one epoch of realised value for a funded strategy.

    The scalar return is Gaussian around the coupled mean (market belief
    mixed with latent quality), floored at -1 so a strategy cannot lose
    more than its allocation. The metric vector carries the scalar value
    plus volatility, drawdown and liquidity proxies from the same draw.
    """
    if allocation_micro < 0:
        raise AllocationError("allocation must be >= 0")
    mu = returns.realized_mean(true_quality, omega)
    r = mu + returns.noise_scale * float(rng.standard_normal())
    if r < -1.0:
        r = -1.0
    a = allocation_micro / MICRO
    liq = metrics_profile[3] if len(metrics_profile) > 3 else 1.0
    vector = (r * a, abs(r - mu) * a, max(0.0, -r) * a, liq * a)
    delta_v_micro = round(r * allocation_micro)
    return RealizedValue(ret=r, delta_v_micro=delta_v_micro, vector=vector)
