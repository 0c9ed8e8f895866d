"""Deterministic protocol engine and simulator for market-validated capital allocation."""

__version__ = "0.1.0"

from .core import (
    AgentId,
    Comparison,
    DecisionCriteria,
    EpochClock,
    Goal,
    IntentionSpec,
    Phase,
    Predicate,
    ProtocolError,
    Role,
    StrategyProposal,
    advance_epoch,
    evaluate_predicate,
    filter_strategies,
)
from .markets import LmsrMarket, MarketError, ParimutuelPool, Side
from .tokens import CommissionContract, DualLedger, LedgerError, MintReason, Token
from .waterfall import (
    InstanceState,
    ResolverKind,
    SettlementReport,
    ValidationInstance,
    WaterfallError,
)

__all__ = [
    "AgentId",
    "Comparison",
    "CommissionContract",
    "DecisionCriteria",
    "DualLedger",
    "EpochClock",
    "Goal",
    "IntentionSpec",
    "InstanceState",
    "LedgerError",
    "LmsrMarket",
    "MarketError",
    "MintReason",
    "ParimutuelPool",
    "Phase",
    "Predicate",
    "ProtocolError",
    "ResolverKind",
    "Role",
    "SettlementReport",
    "Side",
    "StrategyProposal",
    "Token",
    "ValidationInstance",
    "WaterfallError",
    "advance_epoch",
    "evaluate_predicate",
    "filter_strategies",
]
