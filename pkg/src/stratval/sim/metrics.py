"""Per-run metrics computed from the event log.

Everything here is derived from the log alone (plus the run_meta record),
so metrics can be recomputed offline from a stored log file. Detection
metrics are reported as absent (None) rather than zero when no fraud was
injected; the undetected-fraud fraction is compared against the analytic
exp(-rate * exposure) that the Poisson audit schedule implies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from ..events import EventLog
from ..fixedpoint import MICRO

CALIBRATION_BINS = 10


@dataclass
class CalibrationBin:
    lo: float
    hi: float
    count: int
    mean_omega: float
    frac_true: float


@dataclass
class MetricsReport:
    scalars: dict[str, float | None] = field(default_factory=dict)
    calibration: list[CalibrationBin] = field(default_factory=list)
    calibration_pairs: list[tuple[float, bool]] = field(default_factory=list)

    def to_rows(self, seed: int) -> list[tuple[int, str, str]]:
        rows = []
        for name in sorted(self.scalars):
            value = self.scalars[name]
            rows.append((seed, name, "" if value is None else repr(value)))
        for b in self.calibration:
            rows.append(
                (seed, f"calibration_{b.lo:.1f}_{b.hi:.1f}",
                 f"{b.count}|{b.mean_omega:.6f}|{b.frac_true:.6f}")
            )
        return rows


def report_metrics(log: EventLog) -> MetricsReport:
    meta = None
    strategies: dict[str, dict] = {}
    audits: dict[str, list[str]] = {}
    settles: list = []
    instance_info: dict[str, dict] = {}
    allocations: list = []
    rounds: list = []
    values: list = []
    slashed = {"supra": 0, "alpha": 0}
    minted = 0
    burned = 0
    reward_minted = 0

    for ev in log:
        if ev.kind == "run_meta":
            meta = ev
        elif ev.kind == "strategy":
            strategies[ev.strategy] = {
                "quality": ev.quality, "complexity": ev.complexity,
                "listed": ev.epoch, "proposer": ev.proposer,
            }
        elif ev.kind == "audit":
            audits.setdefault(ev.strategy, []).append(ev.outcome)
        elif ev.kind == "instance_open":
            instance_info[ev.instance] = {"strategy": ev.strategy, "intention": ev.intention}
        elif ev.kind == "settle":
            settles.append(ev)
        elif ev.kind == "allocation":
            allocations.append(ev)
        elif ev.kind == "allocation_round":
            rounds.append(ev)
        elif ev.kind == "value":
            values.append(ev)
        elif ev.kind == "ledger":
            if ev.op in ("slash", "penalty"):
                slashed[ev.token] += ev.amount
            elif ev.op == "mint":
                minted += ev.amount
            elif ev.op == "burn":
                burned += ev.amount
        elif ev.kind == "mint_event":
            reward_minted += ev.amount

    report = MetricsReport()
    s = report.scalars
    if meta is None:
        raise ValueError("log has no run_meta record")
    epochs = meta.epochs
    rate = meta.audit_rate

    s["strategies_listed"] = float(len(strategies))
    fraud_ids = [sid for sid, d in strategies.items() if d["quality"] < meta.fraud_threshold]
    s["fraud_listed"] = float(len(fraud_ids))
    executed = {
        sid: [o for o in outcomes if o != "starved"] for sid, outcomes in audits.items()
    }
    s["audits_executed"] = float(sum(len(v) for v in executed.values()))
    s["audits_starved"] = float(
        sum(1 for outcomes in audits.values() for o in outcomes if o == "starved")
    )
    if fraud_ids:
        detected = [
            sid for sid in fraud_ids if any(o == "fraud_detected" for o in audits.get(sid, []))
        ]
        unaudited = [sid for sid in fraud_ids if not executed.get(sid)]
        s["fraud_detection_rate"] = len(detected) / len(fraud_ids)
        s["fraud_unaudited_fraction"] = len(unaudited) / len(fraud_ids)
        s["expected_unaudited_fraction"] = sum(
            math.exp(-rate * ((epochs - 1) - strategies[sid]["listed"])) for sid in fraud_ids
        ) / len(fraud_ids)
    else:
        s["fraud_detection_rate"] = None
        s["fraud_unaudited_fraction"] = None
        s["expected_unaudited_fraction"] = None

    # welfare: discounted realised value net of the modelled verification cost
    welfare = 0.0
    for ev in values:
        a = ev.allocation / MICRO
        dv = ev.delta_v / MICRO
        complexity = strategies[ev.strategy]["complexity"]
        phi = meta.cost_base + meta.cost_rate * complexity**meta.cost_exponent * a
        welfare += meta.discount**ev.epoch * (dv - phi)
    s["welfare"] = welfare if values else None

    utilization = [ev.allocated / ev.budget for ev in rounds if ev.budget > 0]
    s["capital_utilization"] = sum(utilization) / len(utilization) if utilization else None

    funded_ids = {ev.strategy for ev in allocations if ev.amount > 0}
    funded_quality = [strategies[sid]["quality"] for sid in funded_ids]
    unfunded_quality = [
        d["quality"] for sid, d in strategies.items() if sid not in funded_ids
    ]
    s["mean_quality_funded"] = (
        sum(funded_quality) / len(funded_quality) if funded_quality else None
    )
    s["mean_quality_unfunded"] = (
        sum(unfunded_quality) / len(unfunded_quality) if unfunded_quality else None
    )
    funded_omega = [ev.omega for ev in allocations if ev.amount > 0]
    s["mean_confidence_funded"] = (
        sum(funded_omega) / len(funded_omega) if funded_omega else None
    )
    unfunded_omega = [
        ev.implied
        for ev in settles
        if instance_info[ev.instance]["strategy"] not in funded_ids
    ]
    s["mean_confidence_unfunded"] = (
        sum(unfunded_omega) / len(unfunded_omega) if unfunded_omega else None
    )

    s["slashed_supra"] = slashed["supra"] / MICRO
    s["slashed_alpha"] = slashed["alpha"] / MICRO
    s["alpha_minted"] = minted / MICRO
    s["alpha_reward_minted"] = reward_minted / MICRO
    s["alpha_burned"] = burned / MICRO
    s["instances_settled"] = float(len(settles))

    # calibration: market belief at settlement vs ground-truth claim
    for ev in settles:
        sid = instance_info[ev.instance]["strategy"]
        truth = strategies[sid]["quality"] >= meta.claim_truth_threshold
        report.calibration_pairs.append((ev.implied, truth))
    bins: list[list] = [[0, 0.0, 0] for _ in range(CALIBRATION_BINS)]
    for omega, truth in report.calibration_pairs:
        idx = min(CALIBRATION_BINS - 1, int(omega * CALIBRATION_BINS))
        bins[idx][0] += 1
        bins[idx][1] += omega
        bins[idx][2] += 1 if truth else 0
    for i, (count, omega_sum, true_count) in enumerate(bins):
        if count:
            report.calibration.append(
                CalibrationBin(
                    lo=i / CALIBRATION_BINS, hi=(i + 1) / CALIBRATION_BINS,
                    count=count, mean_omega=omega_sum / count, frac_true=true_count / count,
                )
            )
    return report
