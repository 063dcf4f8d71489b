"""Deterministic risk engine.

    RS = min(100, base + f_res + f_ctx + f_hist + f_anom)

All arithmetic is integer. The only state the engine sees comes through
the four TraceStore reads; given the same request, counters and policy it
always returns the same result.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Mapping, NamedTuple

from .policy import (
    ContextFlag,
    EngineVersion,
    HistoryFlag,
    PolicyConfig,
    PolicyError,
    ResourceClass,
    lookup_base,
    parse_capability,
)
from .stores import TraceStore

FAIL_CLOSED = "fail-closed"

RULE_BONUS = {"RULE1": 20, "RULE2": 15, "RULE3": 15}


class ValidationError(ValueError):
    """The request itself is malformed; no decision is produced."""


class Decision(str, Enum):
    APPROVED = "APPROVED"
    ESCALATED = "ESCALATED"
    DENIED = "DENIED"
    COOLDOWN_ACTIVE = "COOLDOWN_ACTIVE"


class Rule(str, Enum):
    RULE1 = "RULE1"
    RULE2 = "RULE2"
    RULE3 = "RULE3"

    @property
    def bonus(self) -> int:
        return RULE_BONUS[self.value]


@dataclass(frozen=True)
class EvalRequest:
    agent_id: str
    capability: str
    resource: str
    resource_class: ResourceClass
    autonomy_level: int
    timestamp: int
    context_flags: frozenset[ContextFlag] = frozenset()
    history_flags: frozenset[HistoryFlag] = frozenset()

    def __post_init__(self) -> None:
        try:
            object.__setattr__(self, "resource_class", ResourceClass(self.resource_class))
            object.__setattr__(self, "context_flags",
                               frozenset(ContextFlag(f) for f in self.context_flags))
            object.__setattr__(self, "history_flags",
                               frozenset(HistoryFlag(f) for f in self.history_flags))
        except (ValueError, TypeError) as exc:
            raise ValidationError(str(exc)) from exc
        self.validate()

    def validate(self) -> None:
        for name in ("agent_id", "capability", "resource"):
            v = getattr(self, name)
            if not isinstance(v, str) or not v:
                raise ValidationError(f"{name} must be a non-empty string")
        try:
            parse_capability(self.capability)
        except PolicyError as exc:
            raise ValidationError(str(exc)) from exc
        lvl = self.autonomy_level
        if not isinstance(lvl, int) or isinstance(lvl, bool) or not 0 <= lvl <= 4:
            raise ValidationError(f"autonomy_level must be an integer in [0, 4], got {lvl!r}")
        ts = self.timestamp
        if not isinstance(ts, int) or isinstance(ts, bool) or ts < 0:
            raise ValidationError(f"timestamp must be a non-negative integer, got {ts!r}")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> EvalRequest:
        allowed = {"agent_id", "capability", "resource", "resource_class", "autonomy_level",
                   "timestamp", "context_flags", "history_flags"}
        unknown = set(data) - allowed
        if unknown:
            raise ValidationError(f"unknown request fields: {sorted(unknown)}")
        missing = {"agent_id", "capability", "resource", "resource_class",
                   "autonomy_level", "timestamp"} - set(data)
        if missing:
            raise ValidationError(f"missing request fields: {sorted(missing)}")
        return cls(
            agent_id=data["agent_id"],
            capability=data["capability"],
            resource=data["resource"],
            resource_class=data["resource_class"],
            autonomy_level=data["autonomy_level"],
            timestamp=data["timestamp"],
            context_flags=frozenset(data.get("context_flags", ())),
            history_flags=frozenset(data.get("history_flags", ())),
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "agent_id": self.agent_id,
            "capability": self.capability,
            "resource": self.resource,
            "resource_class": self.resource_class.value,
            "autonomy_level": self.autonomy_level,
            "timestamp": self.timestamp,
            "context_flags": sorted(f.value for f in self.context_flags),
            "history_flags": sorted(f.value for f in self.history_flags),
        }


@dataclass(frozen=True)
class FactorBreakdown:
    base: int = 0
    f_res: int = 0
    f_ctx: int = 0
    f_hist: int = 0
    f_anom: int = 0
    rules_fired: frozenset[Rule] = frozenset()

    @property
    def total(self) -> int:
        return self.base + self.f_res + self.f_ctx + self.f_hist + self.f_anom

    def to_dict(self) -> dict[str, Any]:
        return {
            "base": self.base,
            "f_res": self.f_res,
            "f_ctx": self.f_ctx,
            "f_hist": self.f_hist,
            "f_anom": self.f_anom,
            "rules_fired": sorted(r.value for r in self.rules_fired),
        }


ZERO_BREAKDOWN = FactorBreakdown()


@dataclass(frozen=True)
class EvalResult:
    decision: Decision
    rs_final: int
    breakdown: FactorBreakdown
    reason: str
    policy_hash: str

    @property
    def failed_closed(self) -> bool:
        return self.reason == FAIL_CLOSED

    def to_dict(self) -> dict[str, Any]:
        return {
            "decision": self.decision.value,
            "rs_final": self.rs_final,
            "breakdown": self.breakdown.to_dict(),
            "reason": self.reason,
            "policy_hash": self.policy_hash,
        }


class AnomalyResult(NamedTuple):
    f_anom: int
    rules_fired: frozenset[Rule]


def pattern_key(agent_id: str, capability: str, resource: str) -> str:
    """SHA-256 hex digest of ``agent_id|capability|resource``."""
    for name, v in (("agent_id", agent_id), ("capability", capability), ("resource", resource)):
        if not isinstance(v, str) or not v:
            raise ValidationError(f"{name} must be a non-empty string")
    return hashlib.sha256(f"{agent_id}|{capability}|{resource}".encode("utf-8")).hexdigest()


def compute_fanom(req: EvalRequest, key: str, store: TraceStore,
                  policy: PolicyConfig) -> AnomalyResult:
    now = req.timestamp
    if policy.engine_version is EngineVersion.RISK_3_0:
        rate = store.count_pattern(key, policy.rule1_window_s, now)
    else:
        rate = store.count_requests(req.agent_id, policy.rule1_window_s, now)
    denials = store.count_denials(req.agent_id, policy.rule2_window_s, now)
    repeats = store.count_pattern(key, policy.rule3_window_s, now)

    fired = set()
    if rate > policy.rule1_threshold_n:
        fired.add(Rule.RULE1)
    if denials >= policy.rule2_threshold_x:
        fired.add(Rule.RULE2)
    if repeats >= policy.rule3_threshold_y:
        fired.add(Rule.RULE3)
    return AnomalyResult(sum(r.bonus for r in fired), frozenset(fired))


def _weights(table: Mapping[Any, int], flags: Iterable[Any]) -> int:
    return sum(table.get(f, 0) for f in flags)


def decide(rs: int, level: int, policy: PolicyConfig) -> Decision:
    thresholds = policy.thresholds_for(level)
    if thresholds is None:
        return Decision.DENIED
    if rs <= thresholds.approved_max:
        return Decision.APPROVED
    if rs <= thresholds.escalated_max:
        return Decision.ESCALATED
    return Decision.DENIED


def fail_closed_result(policy: PolicyConfig) -> EvalResult:
    return EvalResult(Decision.DENIED, 0, ZERO_BREAKDOWN, FAIL_CLOSED, policy.policy_hash)


def evaluate(req: EvalRequest, store: TraceStore, policy: PolicyConfig) -> EvalResult:
    """Run the admission pipeline for one request.

    Raises ValidationError for malformed requests. Any other failure,
    including store errors, yields a DENIED result with reason
    ``fail-closed``.
    """
    if not isinstance(req, EvalRequest):
        raise ValidationError("expected an EvalRequest")
    req.validate()
    try:
        if store.cooldown_active(req.agent_id, req.timestamp):
            return EvalResult(Decision.COOLDOWN_ACTIVE, 0, ZERO_BREAKDOWN,
                              "cooldown active", policy.policy_hash)

        key = pattern_key(req.agent_id, req.capability, req.resource)
        anomaly = compute_fanom(req, key, store, policy)
        breakdown = FactorBreakdown(
            base=lookup_base(policy, req.capability),
            f_res=policy.resource_scores[req.resource_class],
            f_ctx=_weights(policy.ctx_weights, req.context_flags),
            f_hist=_weights(policy.hist_weights, req.history_flags),
            f_anom=anomaly.f_anom,
            rules_fired=anomaly.rules_fired,
        )
        rs = min(100, breakdown.total)
        decision = decide(rs, req.autonomy_level, policy)
    except Exception:
        return fail_closed_result(policy)

    th = policy.thresholds_for(req.autonomy_level)
    if th is None:
        reason = f"no thresholds for autonomy level {req.autonomy_level}"
    else:
        reason = {
            Decision.APPROVED: f"rs {rs} <= {th.approved_max}",
            Decision.ESCALATED: f"rs {rs} in ({th.approved_max}, {th.escalated_max}]",
            Decision.DENIED: f"rs {rs} > {th.escalated_max}",
        }[decision]
    return EvalResult(decision, rs, breakdown, reason, policy.policy_hash)


def should_enter_cooldown(agent_id: str, now: int, store: TraceStore,
                          policy: PolicyConfig) -> bool:
    denials = store.count_denials(agent_id, policy.cooldown_trigger_window_s, now)
    return denials >= policy.cooldown_trigger_denials
