"""Stateful, deterministic risk-based admission control for autonomous agents."""

from .canonical import CanonicalizationError, canonical_bytes
from .conformance import RunReport, SequenceVector, load_bundled_suite, load_suite, run_vector
from .engine import Decision, EvalRequest, EvalResult, FactorBreakdown, Rule, evaluate, pattern_key
from .execution import StepOutcome, UpdateOrdering, process
from .ledger import LedgerChain, LedgerEvent, Verdict, record_outcome, verify_chain
from .policy import (
    ContextFlag,
    EngineVersion,
    HistoryFlag,
    PolicyConfig,
    ResourceClass,
    Thresholds,
    default_policy,
    load_policy,
)
from .stores import DelayedStore, InMemoryStore, InstrumentedStore, NullStore, TraceStore

__version__ = "0.1.0"

__all__ = [
    "CanonicalizationError", "canonical_bytes",
    "RunReport", "SequenceVector", "load_bundled_suite", "load_suite", "run_vector",
    "Decision", "EvalRequest", "EvalResult", "FactorBreakdown", "Rule", "evaluate", "pattern_key",
    "StepOutcome", "UpdateOrdering", "process",
    "LedgerChain", "LedgerEvent", "Verdict", "record_outcome", "verify_chain",
    "ContextFlag", "EngineVersion", "HistoryFlag", "PolicyConfig", "ResourceClass", "Thresholds",
    "default_policy", "load_policy",
    "DelayedStore", "InMemoryStore", "InstrumentedStore", "NullStore", "TraceStore",
]
