"""Execution contract: how one admission attempt touches the store.

EVALUATE_THEN_UPDATE evaluates against history that excludes the current
attempt, so a pattern's n-th occurrence sees a count of n-1.
UPDATE_THEN_EVALUATE records the attempt first, so it sees n.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .engine import (
    Decision,
    EvalRequest,
    EvalResult,
    evaluate,
    fail_closed_result,
    pattern_key,
    should_enter_cooldown,
)
from .policy import PolicyConfig
from .stores import TraceStore


class UpdateOrdering(str, Enum):
    EVALUATE_THEN_UPDATE = "EVALUATE_THEN_UPDATE"
    UPDATE_THEN_EVALUATE = "UPDATE_THEN_EVALUATE"


@dataclass(frozen=True)
class StepOutcome:
    result: EvalResult
    cooldown_entered: bool = False
    error: str | None = None

    def __post_init__(self) -> None:
        if self.cooldown_entered and self.result.decision is not Decision.DENIED:
            raise ValueError("cooldown can only be entered on a DENIED step")


def _record_attempt(req: EvalRequest, store: TraceStore) -> None:
    store.add_request(req.agent_id, req.timestamp)
    store.add_pattern(pattern_key(req.agent_id, req.capability, req.resource), req.timestamp)


def process(req: EvalRequest, store: TraceStore, policy: PolicyConfig,
            ordering: UpdateOrdering = UpdateOrdering.EVALUATE_THEN_UPDATE) -> StepOutcome:
    """Evaluate ``req`` and apply the state updates in contract order.

    Request and pattern are recorded for every attempt, blocked ones
    included. A DENIED decision adds a denial and may start a cooldown;
    COOLDOWN_ACTIVE never adds a denial. Store failures produce an outcome
    with ``error`` set and a fail-closed DENIED result; a failed cooldown
    check keeps the real denial and defers the cooldown.
    """
    req.validate()
    ordering = UpdateOrdering(ordering)
    try:
        if ordering is UpdateOrdering.UPDATE_THEN_EVALUATE:
            _record_attempt(req, store)
        result = evaluate(req, store, policy)
        if result.failed_closed:
            return StepOutcome(result, error="evaluation failed closed")
        if ordering is UpdateOrdering.EVALUATE_THEN_UPDATE:
            _record_attempt(req, store)
        if result.decision is not Decision.DENIED:
            return StepOutcome(result)
        store.add_denial(req.agent_id, req.timestamp)
    except Exception as exc:
        return StepOutcome(fail_closed_result(policy), error=f"store failure: {exc}")

    try:
        if not should_enter_cooldown(req.agent_id, req.timestamp, store, policy):
            return StepOutcome(result)
        store.set_cooldown(req.agent_id, req.timestamp + policy.cooldown_period_s)
    except Exception as exc:
        return StepOutcome(result, error=f"cooldown deferred: {exc}")
    return StepOutcome(result, cooldown_entered=True)
