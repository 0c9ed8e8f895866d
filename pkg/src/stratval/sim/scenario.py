"""Scenario configuration: TOML loading, exhaustive validation, defaults.

A scenario file is nested key-value text whose sections mirror the config
groups below. Validation is all-at-once: every violation is collected with
its ``section.key`` path before the loader raises, and unknown sections or
keys are errors (typos must not silently fall back to defaults).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, fields as dc_fields
from pathlib import Path

import tomli

from ..core import Comparison, Goal, Predicate


class ScenarioError(Exception):
    """Config rejected; ``errors`` lists every violation with its field path."""

    def __init__(self, errors: list[str]):
        self.errors = errors
        super().__init__("; ".join(errors))


@dataclass
class RunSection:
    epochs: int = 24
    seed: int = 1
    snapshot_every: int = 0


@dataclass
class IntervalsSection:
    proposal: int = 2
    assessment: int = 3
    rebalancing: int = 2
    withdrawal: int = 1


@dataclass
class PopulationSection:
    capital_owners: int = 1
    proposers: int = 3
    verifiers: int = 5
    deep_searchers: int = 1
    arbitrators: int = 1


@dataclass
class PoliciesSection:
    verifier_noise: float = 0.1
    lazy_fraction: float = 0.0
    abstain_probability: float = 0.5
    adversarial_fraction: float = 0.0
    proposal_probability: float = 1.0
    deep_searcher_accuracy: float = 0.9
    arbitrator_accuracy: float = 0.9
    challenge_propensity: float = 0.8
    vote_stake: float = 10.0


@dataclass
class MarketSection:
    mechanism: str = "parimutuel"
    liquidity: float = 100.0
    fee_rate: float = 0.01


@dataclass
class AuditSection:
    rate: float = 0.05
    gas_fee: float = 1.0
    reward_coeff: float = 0.01
    detection_accuracy: float = 0.95
    lottery_genesis: float = 1000.0
    fee_topup_fraction: float = 0.1


@dataclass
class ProtocolSection:
    c_min: float = 100.0
    r_min: float = 50.0
    rho_min: float = 0.0
    arbitration_window: int = 2
    arbitration_stake_factor: float = 2.0
    min_arbitrator_participation: int = 0
    alpha_reward: float = 1.0
    fraud_threshold: float = 0.3
    claim_truth_threshold: float = 0.5
    fraud_penalty: float = 100.0
    alpha_decay_rate: float = 0.0  # per-epoch exponential decay of free Alpha; 0 = off


@dataclass
class CommissionSection:
    rate: float = 0.1
    divert_fraction: float = 0.1


@dataclass
class IntentionSection:
    deposit: float = 1000.0
    alpha_burn: float = 10.0
    majority_threshold: float = 0.7
    readjust_every: int = 4
    divergence_tolerance: float = 0.0  # 0 disables the divergence criterion
    divergence_window: int = 8  # trailing vote count the belief deviation is taken over
    require_deep_searcher: bool = False
    predicate: str = ""  # e.g. "metric0 >= 0.5"; empty disables filtering
    metric_index: int = 0
    goal: str = "maximize"


@dataclass
class AllocationSection:
    utility: str = "mean_variance"
    risk_aversion: float = 2.0
    metric_weights: list[float] = field(default_factory=lambda: [1.0, 0.0, 0.0, 0.0])
    vote_weight_exponent: float = 1.0
    env_discount_intercept: float = 1.0
    env_discount_slope: float = 0.0
    discount: float = 0.95


@dataclass
class ReturnsSection:
    mean_intercept: float = -0.1
    mean_slope: float = 0.4
    noise_scale: float = 0.05
    confidence_coupling: float = 0.5


@dataclass
class CostsSection:
    base_fee: float = 0.0
    marginal_rate: float = 0.0005
    complexity_exponent: float = 1.0


@dataclass
class GenesisSection:
    owner_supra: float = 5000.0
    owner_alpha: float = 100.0
    proposer_supra: float = 2000.0
    verifier_supra: float = 2000.0
    verifier_alpha: float = 10.0
    searcher_supra: float = 100.0
    searcher_alpha: float = 500.0
    arbitrator_supra: float = 100.0
    arbitrator_alpha: float = 500.0
    external_market: float = 1_000_000.0
    subsidy_pool: float = 0.0


@dataclass
class QualitySection:
    honest_low: float = 0.35
    honest_high: float = 0.95
    adversarial_low: float = 0.0
    adversarial_high: float = 0.3
    metrics_noise: float = 0.1
    complexity_low: float = 0.5
    complexity_high: float = 3.0


@dataclass
class ScenarioConfig:
    run: RunSection = field(default_factory=RunSection)
    intervals: IntervalsSection = field(default_factory=IntervalsSection)
    population: PopulationSection = field(default_factory=PopulationSection)
    policies: PoliciesSection = field(default_factory=PoliciesSection)
    market: MarketSection = field(default_factory=MarketSection)
    audit: AuditSection = field(default_factory=AuditSection)
    protocol: ProtocolSection = field(default_factory=ProtocolSection)
    commission: CommissionSection = field(default_factory=CommissionSection)
    intention: IntentionSection = field(default_factory=IntentionSection)
    allocation: AllocationSection = field(default_factory=AllocationSection)
    returns: ReturnsSection = field(default_factory=ReturnsSection)
    costs: CostsSection = field(default_factory=CostsSection)
    genesis: GenesisSection = field(default_factory=GenesisSection)
    quality: QualitySection = field(default_factory=QualitySection)

    def parsed_predicates(self) -> tuple[Predicate, ...]:
        if not self.intention.predicate:
            return ()
        return (parse_predicate(self.intention.predicate),)

    def parsed_goal(self) -> Goal:
        return Goal(self.intention.goal)


_SECTIONS = {f.name: f.default_factory for f in dc_fields(ScenarioConfig)}

_PREDICATE_RE = re.compile(r"^metric(\d+)\s*(<=|>=|<|>)\s*(-?\d+(?:\.\d+)?)$")


def parse_predicate(text: str) -> Predicate:
    m = _PREDICATE_RE.match(text.strip())
    if not m:
        raise ScenarioError([f"intention.predicate: cannot parse {text!r}"])
    return Predicate(int(m.group(1)), Comparison(m.group(2)), float(m.group(3)))


def _unit(lo: float = 0.0, hi: float = 1.0, lo_open: bool = False, hi_open: bool = False):
    def check(v):
        above = v > lo if lo_open else v >= lo
        below = v < hi if hi_open else v <= hi
        return above and below

    bounds = f"{'(' if lo_open else '['}{lo}, {hi}{')' if hi_open else ']'}"
    return check, f"must be in {bounds}"


_POSITIVE = (lambda v: v > 0, "must be > 0")
_NON_NEGATIVE = (lambda v: v >= 0, "must be >= 0")

# section -> field -> (predicate, message); anything not listed is type-checked only
_VALIDATORS = {
    "run": {"epochs": _POSITIVE, "seed": _NON_NEGATIVE, "snapshot_every": _NON_NEGATIVE},
    "intervals": {k: _POSITIVE for k in ("proposal", "assessment", "rebalancing", "withdrawal")},
    "population": {
        k: _NON_NEGATIVE
        for k in ("capital_owners", "proposers", "verifiers", "deep_searchers", "arbitrators")
    },
    "policies": {
        "verifier_noise": _NON_NEGATIVE,
        "lazy_fraction": _unit(),
        "abstain_probability": _unit(),
        "adversarial_fraction": _unit(),
        "proposal_probability": _unit(),
        "deep_searcher_accuracy": _unit(),
        "arbitrator_accuracy": _unit(),
        "challenge_propensity": _unit(),
        "vote_stake": _POSITIVE,
    },
    "market": {
        "mechanism": (lambda v: v in ("parimutuel", "lmsr"), "must be 'parimutuel' or 'lmsr'"),
        "liquidity": _POSITIVE,
        "fee_rate": _unit(0.0, 1.0, hi_open=True),
    },
    "audit": {
        "rate": (lambda v: v > 0, "audit rate must be positive"),
        "gas_fee": _NON_NEGATIVE,
        "reward_coeff": _NON_NEGATIVE,
        "detection_accuracy": _unit(),
        "lottery_genesis": _NON_NEGATIVE,
        "fee_topup_fraction": _unit(),
    },
    "protocol": {
        "c_min": _POSITIVE,
        "r_min": _POSITIVE,
        "rho_min": _NON_NEGATIVE,
        "arbitration_window": _POSITIVE,
        "arbitration_stake_factor": _POSITIVE,
        "min_arbitrator_participation": _NON_NEGATIVE,
        "alpha_reward": _NON_NEGATIVE,
        "fraud_threshold": _unit(),
        "claim_truth_threshold": _unit(0.0, 1.0, lo_open=True, hi_open=True),
        "fraud_penalty": _NON_NEGATIVE,
        "alpha_decay_rate": _unit(0.0, 1.0, hi_open=True),
    },
    "commission": {"rate": _unit(), "divert_fraction": _unit()},
    "intention": {
        "deposit": _POSITIVE,
        "alpha_burn": _POSITIVE,
        "majority_threshold": (lambda v: 0.5 < v <= 1.0, "must exceed 0.5 and be at most 1"),
        "readjust_every": _POSITIVE,
        "divergence_tolerance": _NON_NEGATIVE,
        "divergence_window": (lambda v: v >= 2, "must be >= 2"),
        "metric_index": _NON_NEGATIVE,
        "goal": (lambda v: v in ("maximize", "minimize"), "must be 'maximize' or 'minimize'"),
    },
    "allocation": {
        "utility": (
            lambda v: v in ("linear", "log_wealth", "mean_variance"),
            "must be one of 'linear', 'log_wealth', 'mean_variance'",
        ),
        "risk_aversion": _NON_NEGATIVE,
        "vote_weight_exponent": _NON_NEGATIVE,
        "discount": _unit(0.0, 1.0, lo_open=True, hi_open=True),
    },
    "returns": {
        "noise_scale": _POSITIVE,
        "confidence_coupling": _unit(),
    },
    "costs": {
        "base_fee": _NON_NEGATIVE,
        "marginal_rate": _NON_NEGATIVE,
        "complexity_exponent": _NON_NEGATIVE,
    },
    "genesis": {f.name: _NON_NEGATIVE for f in dc_fields(GenesisSection)},
    "quality": {
        "honest_low": _unit(),
        "honest_high": _unit(),
        "adversarial_low": _unit(),
        "adversarial_high": _unit(),
        "metrics_noise": _NON_NEGATIVE,
        "complexity_low": _POSITIVE,
        "complexity_high": _POSITIVE,
    },
}


def _coerce(section: str, key: str, declared, value, errors: list[str]):
    if isinstance(declared, bool):
        if not isinstance(value, bool):
            errors.append(f"{section}.{key}: expected a boolean")
            return declared
        return value
    if isinstance(declared, int):
        if isinstance(value, bool) or not isinstance(value, int):
            errors.append(f"{section}.{key}: expected an integer")
            return declared
        return value
    if isinstance(declared, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            errors.append(f"{section}.{key}: expected a number")
            return declared
        return float(value)
    if isinstance(declared, str):
        if not isinstance(value, str):
            errors.append(f"{section}.{key}: expected a string")
            return declared
        return value
    if isinstance(declared, list):
        if not isinstance(value, list) or not all(
            isinstance(x, (int, float)) and not isinstance(x, bool) for x in value
        ):
            errors.append(f"{section}.{key}: expected a list of numbers")
            return declared
        return [float(x) for x in value]
    errors.append(f"{section}.{key}: unsupported config type")
    return declared


def build_config(data: dict) -> ScenarioConfig:
    """Validate a parsed mapping; raises ScenarioError listing every problem."""
    errors: list[str] = []
    config = ScenarioConfig()
    for section_name, content in data.items():
        if section_name not in _SECTIONS:
            errors.append(f"{section_name}: unknown section")
            continue
        if not isinstance(content, dict):
            errors.append(f"{section_name}: expected a table of keys")
            continue
        section_obj = getattr(config, section_name)
        declared = {f.name: getattr(section_obj, f.name) for f in dc_fields(section_obj)}
        for key, value in content.items():
            if key not in declared:
                errors.append(f"{section_name}.{key}: unknown key")
                continue
            setattr(section_obj, key, _coerce(section_name, key, declared[key], value, errors))

    for section_name, rules in _VALIDATORS.items():
        section_obj = getattr(config, section_name)
        for key, (check, message) in rules.items():
            value = getattr(section_obj, key)
            try:
                ok = check(value)
            except TypeError:
                ok = False
            if not ok:
                errors.append(f"{section_name}.{key}: {message}")

    if config.quality.honest_low > config.quality.honest_high:
        errors.append("quality.honest_low: must not exceed quality.honest_high")
    if config.quality.adversarial_low > config.quality.adversarial_high:
        errors.append("quality.adversarial_low: must not exceed quality.adversarial_high")
    if config.quality.complexity_low > config.quality.complexity_high:
        errors.append("quality.complexity_low: must not exceed quality.complexity_high")
    if config.intention.predicate:
        try:
            parse_predicate(config.intention.predicate)
        except ScenarioError as exc:
            errors.extend(exc.errors)
    if not errors and len(config.allocation.metric_weights) < 1:
        errors.append("allocation.metric_weights: must not be empty")

    if errors:
        raise ScenarioError(errors)
    return config


def load_scenario(path: str | Path) -> ScenarioConfig:
    """Load and validate a scenario file; missing keys take documented defaults."""
    p = Path(path)
    if not p.exists():
        raise ScenarioError([f"scenario file not found: {p}"])
    try:
        with open(p, "rb") as fh:
            data = tomli.load(fh)
    except tomli.TOMLDecodeError as exc:
        raise ScenarioError([f"parse error: {exc}"]) from exc
    return build_config(data)
