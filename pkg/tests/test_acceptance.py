"""Acceptance suite: every criterion at its stated tolerance.

Each test prints one PASS/FAIL line (run with ``pytest -s`` to see them all).
Expected values come from independent oracles computed inside this module:
a vectorised simplex grid search for the allocation solver, closed-form
market formulas evaluated directly, and Monte Carlo statistics with fixed
seeds for the stochastic checks.
"""

import itertools
import math
import time

import numpy as np
import pytest

from stratval.allocation import (
    ReturnModel,
    StrategyEntry,
    UtilityKind,
    UtilityModel,
    VerificationCostModel,
    expected_net_utility,
    net_utility_gradient,
    solve_allocation,
)
from stratval.audit import sample_audit_events
from stratval.core import AgentId, Role
from stratval.events import EventLog
from stratval.fixedpoint import MICRO
from stratval.markets import LmsrMarket, ParimutuelPool, Side
from stratval.sim import report_metrics, run, verify_log
from stratval.sim.scenario import build_config
from stratval.tokens import SLASH_POOL, Token

from conftest import ARBITRATOR, SEARCHER, VERIFIERS, build_intention
import conftest
import test_waterfall as wf


def _report(number: int, name: str, ok: bool, detail: str = "") -> bool:
    status = "PASS" if ok else "FAIL"
    suffix = f" ({detail})" if detail else ""
    print(f"[criterion {number}] {status} — {name}{suffix}")
    return ok


# -- 1. LMSR bounded loss ------------------------------------------------------

def test_criterion_1_lmsr_bounded_loss():
    started = time.monotonic()
    rng = np.random.default_rng(2024)
    worst_margin = -math.inf
    n_sequences = 1200
    for _ in range(n_sequences):
        ell = float(rng.choice([10.0, 100.0, 1000.0]))
        market = LmsrMarket("c", liquidity=ell)
        for _ in range(int(rng.integers(0, 30))):
            side = Side.AGREE if rng.random() < 0.5 else Side.DISAGREE
            market.buy("v", side, float(rng.uniform(1e-3, 5 * ell)))
        bound = ell * math.log(2.0) + 1e-6
        # loss under either outcome: winning shares paid at face value
        for shares in (market.q_yes, market.q_no):
            loss = shares - market.collected
            worst_margin = max(worst_margin, loss - bound)
    elapsed = time.monotonic() - started
    ok = worst_margin <= 0.0 and elapsed < 10.0
    assert _report(
        1, "LMSR maker loss capped at ell*ln(2) + 1e-6",
        ok, f"{n_sequences} sequences, worst margin {worst_margin:.3e}, {elapsed:.1f}s",
    )


# -- 2. LMSR price and cost identities ----------------------------------------

def test_criterion_2_lmsr_identities():
    rng = np.random.default_rng(7)
    ok = True
    for _ in range(500):
        ell = float(rng.uniform(0.5, 1000.0))
        q_yes = float(rng.uniform(0.0, 50 * ell))
        q_no = float(rng.uniform(0.0, 50 * ell))
        market = LmsrMarket("c", liquidity=ell, q_yes=q_yes, q_no=q_no)
        mirror = LmsrMarket("c", liquidity=ell, q_yes=q_no, q_no=q_yes)
        p_yes, p_no = market.price(), mirror.price()
        ok &= 0.0 < p_yes < 1.0
        ok &= abs(p_yes + p_no - 1.0) <= 1e-12
    # cost path-independence over random trade orderings
    for _ in range(200):
        ell = float(rng.choice([10.0, 100.0, 1000.0]))
        a = LmsrMarket("c", liquidity=ell)
        total = 0.0
        for _ in range(int(rng.integers(1, 25))):
            side = Side.AGREE if rng.random() < 0.5 else Side.DISAGREE
            total += a.buy("v", side, float(rng.uniform(1e-3, 3 * ell)))
        b = LmsrMarket("c", liquidity=ell)
        direct = 0.0
        if a.q_yes:
            direct += b.buy("v", Side.AGREE, a.q_yes)
        if a.q_no:
            direct += b.buy("v", Side.DISAGREE, a.q_no)
        ok &= abs(total - direct) <= 1e-9 * max(1.0, abs(direct))
    balanced = LmsrMarket("c", liquidity=37.0, q_yes=123.0, q_no=123.0)
    ok &= balanced.price() == pytest.approx(0.5, abs=1e-15)
    assert _report(2, "LMSR price in (0,1), yes+no sum, path independence, 0.5 symmetry", ok)


# -- 3. Parimutuel conservation and payout formula -----------------------------

def test_criterion_3_parimutuel_conservation_and_formula():
    rng = np.random.default_rng(11)
    ok = True
    for _ in range(400):
        pool = ParimutuelPool("c")
        n = int(rng.integers(1, 12))
        for i in range(n):
            side = Side.AGREE if rng.random() < 0.5 else Side.DISAGREE
            pool.stake(f"v{i}", side, int(rng.integers(1, 10**9)))
        stakes = dict(pool.stakes)
        total = pool.total
        outcome = Side.AGREE if rng.random() < 0.5 else Side.DISAGREE
        winning = pool.side_total(outcome)
        losing = pool.side_total(outcome.other())
        payouts = pool.settle(outcome)
        ok &= sum(payouts.values()) == total
        if winning > 0:
            for (voter, side), s_v in stakes.items():
                if side is outcome:
                    formula = s_v + s_v * losing / winning
                    ok &= abs(payouts[voter] - formula) <= 1.0 + 1e-9  # one micro-unit
    assert _report(3, "parimutuel exact conservation and pro-rata payout formula", ok)


# -- 4. Audit lottery statistics -----------------------------------------------

def test_criterion_4a_poisson_schedule_statistics():
    rng = np.random.default_rng(99)
    lam, horizon, n = 0.1, 100.0, 10_000
    counts = np.array([len(sample_audit_events(rng, lam, horizon)) for _ in range(n)])
    mean = counts.mean()
    var = counts.var(ddof=1)
    zero_frac = float((counts == 0).mean())
    expected_zero = math.exp(-lam * horizon)
    se_zero = math.sqrt(expected_zero * (1 - expected_zero) / n)
    ok = (
        9.7 <= mean <= 10.3
        and 9.0 <= var <= 11.0
        and abs(zero_frac - expected_zero) <= 3 * se_zero
    )
    assert _report(
        4, "audit schedule Poisson moments and zero-event fraction",
        ok, f"mean {mean:.3f}, var {var:.3f}, zero {zero_frac:.2e} vs {expected_zero:.2e}",
    )


def test_criterion_4b_undetected_fraud_matches_exponential():
    started = time.monotonic()
    # single proposal cohort at epoch 0; audits are the only dynamics of interest
    config = build_config({
        "run": {"epochs": 40},
        "intervals": {"proposal": 1, "assessment": 13, "rebalancing": 13, "withdrawal": 13},
        "population": {"proposers": 3, "verifiers": 2, "deep_searchers": 1, "arbitrators": 1},
        "policies": {"adversarial_fraction": 1.0, "challenge_propensity": 0.0},
        "audit": {"rate": 0.1, "detection_accuracy": 1.0, "lottery_genesis": 10_000.0,
                  "gas_fee": 0.1},
    })
    total_fraud = 0
    total_unaudited = 0.0
    expected_fractions = []
    seeds = 200
    for seed in range(seeds):
        metrics = report_metrics(run(config, seed=seed).log)
        listed = metrics.scalars["fraud_listed"]
        assert listed and metrics.scalars["fraud_unaudited_fraction"] is not None
        total_fraud += int(listed)
        total_unaudited += metrics.scalars["fraud_unaudited_fraction"] * listed
        expected_fractions.append(metrics.scalars["expected_unaudited_fraction"])
    elapsed = time.monotonic() - started
    empirical = total_unaudited / total_fraud
    expected = sum(expected_fractions) / len(expected_fractions)  # exp(-lam*T), T = 39
    se = math.sqrt(expected * (1 - expected) / total_fraud)
    ok = abs(empirical - expected) <= 3 * se and elapsed < 60.0
    assert _report(
        4, "undetected-fraud fraction matches exp(-rate*T) across seeds",
        ok,
        f"{total_fraud} fraud strategies, empirical {empirical:.4f}, "
        f"analytic {expected:.4f}, 3SE {3 * se:.4f}, {elapsed:.1f}s",
    )


# -- 5. Allocation solver vs independent grid oracle ---------------------------

_GH_X, _GH_W = np.polynomial.hermite.hermgauss(64)
_GH_W = _GH_W / math.sqrt(math.pi)


def _grid_points(n: int, steps: int = 200) -> np.ndarray:
    if n == 1:
        return np.array([[1.0]])
    if n == 2:
        k = np.arange(steps + 1) / steps
        return np.stack([k, 1.0 - k], axis=1)
    pts = [
        (i / steps, j / steps, (steps - i - j) / steps)
        for i, j in itertools.product(range(steps + 1), repeat=2)
        if i + j <= steps
    ]
    return np.array(pts)


def _oracle_objective_matrix(x: np.ndarray, budget, entries, utility, returns, cost, wealth):
    """Objective at every grid point; vectorised, independent of the solver."""
    total = np.zeros(len(x))
    for i, e in enumerate(entries):
        a = budget * x[:, i]
        mu = returns.mean_intercept + returns.mean_slope * e.omega
        if utility.kind is UtilityKind.LINEAR:
            eu = mu * a
        elif utility.kind is UtilityKind.MEAN_VARIANCE:
            eu = mu * a - 0.5 * utility.risk_aversion * (returns.noise_scale * a) ** 2
        else:
            r = mu + math.sqrt(2.0) * returns.noise_scale * _GH_X
            arg = np.maximum(1e-12, 1.0 + np.outer(a, r) / wealth)
            eu = np.log(arg) @ _GH_W
        phi = cost.base_fee + cost.marginal_rate * e.complexity**cost.complexity_exponent * a
        total += eu - phi
    return total


def test_criterion_5_allocation_solver_against_grid_oracle():
    rng = np.random.default_rng(404)
    returns = ReturnModel(mean_intercept=-0.1, mean_slope=0.4, noise_scale=0.05)
    cost = VerificationCostModel(base_fee=0.5, marginal_rate=0.001, complexity_exponent=1.2)
    utilities = [
        UtilityModel(kind=UtilityKind.LINEAR),
        UtilityModel(kind=UtilityKind.MEAN_VARIANCE, risk_aversion=5.0),
        UtilityModel(kind=UtilityKind.LOG_WEALTH),
    ]
    ok = True
    worst_gap = 0.0
    for case in range(120):
        n = int(rng.integers(1, 4))
        utility = utilities[case % 3]
        entries = [
            StrategyEntry(f"s{i}", float(rng.uniform(0.05, 0.95)), float(rng.uniform(0.5, 3.0)))
            for i in range(n)
        ]
        budget_micro = int(rng.integers(10, 200)) * MICRO
        result = solve_allocation(budget_micro, entries, utility=utility, returns=returns, cost=cost)
        ok &= sum(result.amounts_micro) == budget_micro
        ok &= all(a >= 0 for a in result.amounts_micro)
        budget = budget_micro / MICRO
        wealth = utility.wealth_scale or budget
        grid = _grid_points(n)
        best = _oracle_objective_matrix(grid, budget, entries, utility, returns, cost, wealth).max()
        gap = (best - result.objective) / max(1.0, abs(best))
        worst_gap = max(worst_gap, gap)
        ok &= result.objective >= best - 1e-6 * abs(best)

    # symmetry and omega-monotonicity across randomized instances
    mv = utilities[1]
    for _ in range(30):
        entries = [
            StrategyEntry(f"s{i}", float(rng.uniform(0.1, 0.8)), float(rng.uniform(0.5, 2.0)))
            for i in range(3)
        ]
        base = solve_allocation(80 * MICRO, entries, utility=mv, returns=returns, cost=cost)
        perm = list(rng.permutation(3))
        permuted = solve_allocation(
            80 * MICRO, [entries[i] for i in perm], utility=mv, returns=returns, cost=cost
        )
        for out_idx, src_idx in enumerate(perm):
            ok &= abs(permuted.amounts_micro[out_idx] - base.amounts_micro[src_idx]) <= 2
        bumped = [StrategyEntry("s0", min(0.95, entries[0].omega + 0.15), entries[0].complexity)]
        higher = solve_allocation(
            80 * MICRO, bumped + entries[1:], utility=mv, returns=returns, cost=cost
        )
        ok &= higher.amounts_micro[0] >= base.amounts_micro[0]

    # analytic gradient vs central finite differences
    for _ in range(60):
        utility = utilities[int(rng.integers(0, 3))]
        omega = float(rng.uniform(0.05, 0.95))
        a = float(rng.uniform(1.0, 90.0))
        complexity = float(rng.uniform(0.5, 3.0))
        g = net_utility_gradient(
            omega, a, utility=utility, returns=returns, cost=cost,
            complexity=complexity, wealth_scale=100.0,
        )
        h = 1e-5 * max(1.0, a)
        fd = (
            expected_net_utility(
                omega, a + h, utility=utility, returns=returns, cost=cost,
                complexity=complexity, wealth_scale=100.0,
            )
            - expected_net_utility(
                omega, a - h, utility=utility, returns=returns, cost=cost,
                complexity=complexity, wealth_scale=100.0,
            )
        ) / (2 * h)
        ok &= abs(g - fd) <= 1e-5 * max(1.0, abs(fd))
    assert _report(
        5, "solver beats 200-step grid oracle; feasible, symmetric, monotone; gradient checks",
        ok, f"worst relative gap {worst_gap:.2e}",
    )


# -- 6. State-machine and ledger soundness across random scenarios --------------

def _random_scenario(rng: np.random.Generator) -> dict:
    return {
        "run": {"epochs": int(rng.integers(8, 25))},
        "intervals": {
            "proposal": int(rng.integers(1, 3)),
            "assessment": int(rng.integers(1, 4)),
            "rebalancing": int(rng.integers(1, 3)),
            "withdrawal": int(rng.integers(1, 3)),
        },
        "population": {
            "capital_owners": int(rng.integers(1, 3)),
            "proposers": int(rng.integers(0, 4)),
            "verifiers": int(rng.integers(0, 7)),
            "deep_searchers": int(rng.integers(0, 3)),
            "arbitrators": int(rng.integers(0, 3)),
        },
        "policies": {
            "verifier_noise": float(rng.uniform(0.0, 0.5)),
            "adversarial_fraction": float(rng.uniform(0.0, 1.0)),
            "lazy_fraction": float(rng.uniform(0.0, 0.5)),
            "deep_searcher_accuracy": float(rng.uniform(0.3, 1.0)),
            "arbitrator_accuracy": float(rng.uniform(0.3, 1.0)),
            "challenge_propensity": float(rng.uniform(0.0, 1.0)),
            "vote_stake": float(rng.uniform(5.0, 150.0)),
        },
        "market": {
            "mechanism": "lmsr" if rng.random() < 0.3 else "parimutuel",
            "liquidity": float(rng.uniform(10.0, 200.0)),
            "fee_rate": float(rng.uniform(0.0, 0.05)),
        },
        "audit": {
            "rate": float(rng.uniform(0.02, 0.5)),
            "detection_accuracy": float(rng.uniform(0.5, 1.0)),
            "lottery_genesis": float(rng.uniform(0.0, 5000.0)),
        },
        "intention": {
            "majority_threshold": float(rng.uniform(0.55, 0.9)),
            "readjust_every": int(rng.integers(1, 8)),
            "require_deep_searcher": bool(rng.random() < 0.2),
        },
        "allocation": {
            "utility": ["linear", "mean_variance", "log_wealth"][int(rng.integers(0, 3))],
            "risk_aversion": float(rng.uniform(0.0, 8.0)),
        },
    }


def test_criterion_6_soundness_across_random_scenarios():
    rng = np.random.default_rng(1234)
    failures = []
    for i in range(50):
        config = build_config(_random_scenario(rng))
        result = run(config, seed=1000 + i, check_invariants=True)
        violations = verify_log(result.log)
        if violations:
            failures.append((i, violations[:3]))
    ok = not failures
    assert _report(
        6, "verify passes on 50 random scenarios plus mutation detection",
        ok, f"failures: {failures[:2]}" if failures else "50/50 clean",
    )


def test_criterion_6_mutations_detected():
    result = run(build_config({"run": {"epochs": 16}}), seed=9)
    lines = result.log.to_lines()
    # double settlement
    settle = next(line for line in lines if " settle " in line)
    doubled = lines + [settle.replace(settle.split()[1], str(10**6), 1)]
    ok = any("settled twice" in v for v in verify_log(EventLog.from_lines(doubled)))
    # broken payout sum
    idx, payout = next(
        (i, line) for i, line in enumerate(lines)
        if " payout " in line and not line.endswith("amount=0")
    )
    head, _, amount = payout.rpartition("amount=")
    broken = lines[:idx] + [f"{head}amount={int(amount) + 777}"] + lines[idx + 1:]
    ok &= any("conservation" in v for v in verify_log(EventLog.from_lines(broken)))
    # missing slash credit
    slashed = run(
        build_config({
            "run": {"epochs": 16},
            "policies": {"deep_searcher_accuracy": 0.0, "arbitrator_accuracy": 1.0,
                         "challenge_propensity": 1.0},
            "intention": {"require_deep_searcher": True},
        }),
        seed=12,
    ).log.to_lines()
    target = next(line for line in slashed if " ledger op=slash " in line)
    slashed.remove(target)
    ok &= any(
        "no matching ledger credit" in v for v in verify_log(EventLog.from_lines(slashed))
    )
    assert _report(6, "hand-injected mutations are each detected", ok)


# -- 7. Determinism --------------------------------------------------------------

def test_criterion_7_byte_identical_logs():
    ok = True
    for overrides, seed in [
        ({}, 5),
        ({"market": {"mechanism": "lmsr", "liquidity": 60.0}}, 6),
        ({"policies": {"adversarial_fraction": 0.5}}, 7),
    ]:
        config = build_config({"run": {"epochs": 16}, **overrides})
        first = run(config, seed=seed).log.to_lines()
        second = run(config, seed=seed).log.to_lines()
        ok &= first == second
    assert _report(7, "identical (config, seed) gives byte-identical event logs", ok)


# -- 8. Arbitration semantics -----------------------------------------------------

def test_criterion_8_arbitration_semantics():
    ok = True
    # upheld challenge: outcome flips, deep searcher's stake -> 0, arbitrator refunded
    ledger = conftest.build_ledger()
    instance = wf.escalate_and_resolve(ledger, Side.DISAGREE)
    searcher_locked_before = ledger.balance(SEARCHER.id, Token.ALPHA, "locked")
    slash_count = [0]
    ledger.on_op = lambda op, *a: slash_count.__setitem__(0, slash_count[0] + (op == "slash"))
    wf.challenge(instance, ledger, upheld=True)
    ok &= instance.resolution.outcome is Side.AGREE
    ok &= searcher_locked_before == 50 * MICRO
    ok &= ledger.balance(SEARCHER.id, Token.ALPHA, "locked") == 0
    ok &= ledger.pool_balance(SLASH_POOL, Token.ALPHA) == 50 * MICRO
    ok &= ledger.balance(ARBITRATOR.id, Token.ALPHA, "free") == 200 * MICRO
    ok &= slash_count[0] == 1

    # failed challenge: arbitrator's stake forfeited, outcome unchanged
    ledger2 = conftest.build_ledger()
    instance2 = wf.escalate_and_resolve(ledger2, Side.DISAGREE)
    slash_count2 = [0]
    ledger2.on_op = lambda op, *a: slash_count2.__setitem__(0, slash_count2[0] + (op == "slash"))
    wf.challenge(instance2, ledger2, upheld=False)
    ok &= instance2.resolution.outcome is Side.DISAGREE
    ok &= ledger2.balance(ARBITRATOR.id, Token.ALPHA, "free") == 100 * MICRO
    ok &= ledger2.pool_balance(SLASH_POOL, Token.ALPHA) == 100 * MICRO
    ok &= ledger2.balance(SEARCHER.id, Token.ALPHA, "locked") == 50 * MICRO
    ok &= slash_count2[0] == 1
    assert _report(
        8, "upheld challenge flips and slashes searcher; failed challenge forfeits arbitrator",
        ok,
    )


# -- 9. End-to-end incentive sanity ----------------------------------------------

def test_criterion_9_incentive_sanity():
    started = time.monotonic()
    config = build_config({
        "run": {"epochs": 16},
        "population": {"proposers": 3, "verifiers": 6},
        "policies": {"verifier_noise": 0.05, "vote_stake": 100.0},
        "quality": {"honest_low": 0.15, "honest_high": 0.95},
    })
    funded_quality: list[float] = []
    unfunded_quality: list[float] = []
    pairs: list[tuple[float, bool]] = []
    seeds = 100
    for seed in range(seeds):
        metrics = report_metrics(run(config, seed=seed).log)
        s = metrics.scalars
        if s["mean_quality_funded"] is not None:
            funded_quality.append(s["mean_quality_funded"])
        if s["mean_quality_unfunded"] is not None:
            unfunded_quality.append(s["mean_quality_unfunded"])
        pairs.extend(metrics.calibration_pairs)
    elapsed = time.monotonic() - started

    mean_funded = sum(funded_quality) / len(funded_quality)
    mean_unfunded = sum(unfunded_quality) / len(unfunded_quality)
    quality_ok = mean_funded > mean_unfunded

    bins = 10
    stats = [[0, 0] for _ in range(bins)]
    for omega, truth in pairs:
        b = min(bins - 1, int(omega * bins))
        stats[b][0] += 1
        stats[b][1] += 1 if truth else 0
    curve = [(i, c, t / c) for i, (c, t) in enumerate(stats) if c >= 20]
    monotone_ok = len(curve) >= 2
    for (_, _, lo), (_, _, hi) in zip(curve, curve[1:]):
        monotone_ok &= hi >= lo - 0.02
    monotone_ok &= curve[-1][2] > curve[0][2]

    ok = quality_ok and monotone_ok
    assert _report(
        9, "funded strategies beat unfunded on latent quality; calibration is monotone",
        ok,
        f"funded {mean_funded:.3f} vs unfunded {mean_unfunded:.3f}; "
        f"curve {[(f'{b[2]:.2f}') for b in curve]}; {elapsed:.1f}s over {seeds} seeds",
    )
