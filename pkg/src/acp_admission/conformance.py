"""Sequence-vector conformance runner.

A vector is a list of requests run in order against one fresh in-memory
store, each with the decision and risk score it must produce. Timestamps
are offsets from a fixed epoch so runs are reproducible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

from .engine import Decision, EvalRequest, ValidationError
from .execution import UpdateOrdering, process
from .policy import PolicyConfig, PolicyError
from .stores import InMemoryStore

EPOCH0 = 1_700_000_000

_VECTOR_KEYS = {"vector_id", "ordering", "policy_overrides", "steps", "description"}
_STEP_KEYS = {"request", "expected"}
_REQUEST_KEYS = {"agent_id", "capability", "resource", "resource_class", "autonomy_level",
                 "context_flags", "history_flags", "timestamp_offset_s"}
_REQUIRED_REQUEST_KEYS = _REQUEST_KEYS - {"context_flags", "history_flags"}
_EXPECTED_KEYS = {"decision", "risk_score"}


class VectorLoadError(ValueError):
    pass


@dataclass(frozen=True)
class VectorStep:
    request: Mapping[str, Any]
    expected_decision: Decision
    expected_rs: int | None

    def to_request(self, epoch0: int) -> EvalRequest:
        fields_ = {k: v for k, v in self.request.items() if k != "timestamp_offset_s"}
        fields_["timestamp"] = epoch0 + self.request["timestamp_offset_s"]
        return EvalRequest.from_dict(fields_)


@dataclass(frozen=True)
class SequenceVector:
    vector_id: str
    steps: tuple[VectorStep, ...]
    ordering: UpdateOrdering = UpdateOrdering.EVALUATE_THEN_UPDATE
    policy_overrides: Mapping[str, Any] = field(default_factory=dict)
    description: str = ""


@dataclass(frozen=True)
class StepReport:
    index: int
    expected_decision: str
    expected_rs: int | None
    actual_decision: str
    actual_rs: int
    passed: bool


@dataclass(frozen=True)
class RunReport:
    vector_id: str
    steps: tuple[StepReport, ...]
    strict: bool

    @property
    def passed(self) -> bool:
        return all(s.passed for s in self.steps)

    @property
    def overall(self) -> str:
        return "PASS" if self.passed else "FAIL"

    def to_dict(self) -> dict[str, Any]:
        return {
            "vector_id": self.vector_id,
            "overall": self.overall,
            "strict": self.strict,
            "steps": [s.__dict__ for s in self.steps],
        }


def _fail(where: str, msg: str) -> VectorLoadError:
    return VectorLoadError(f"{where}: {msg}")


def parse_vector(data: Any, where: str = "<vector>") -> SequenceVector:
    if not isinstance(data, dict):
        raise _fail(where, "vector must be a JSON object")
    unknown = set(data) - _VECTOR_KEYS
    if unknown:
        raise _fail(where, f"unknown fields {sorted(unknown)}")
    vid = data.get("vector_id")
    if not isinstance(vid, str) or not vid:
        raise _fail(where, "vector_id must be a non-empty string")
    where = f"{where} [{vid}]"
    try:
        ordering = UpdateOrdering(data.get("ordering", UpdateOrdering.EVALUATE_THEN_UPDATE))
    except ValueError:
        raise _fail(where, f"ordering: unknown value {data.get('ordering')!r}") from None
    overrides = data.get("policy_overrides") or {}
    if not isinstance(overrides, dict):
        raise _fail(where, "policy_overrides must be an object")
    raw_steps = data.get("steps")
    if not isinstance(raw_steps, list) or not raw_steps:
        raise _fail(where, "steps must be a non-empty list")

    steps = []
    for i, raw in enumerate(raw_steps):
        at = f"{where} steps[{i}]"
        if not isinstance(raw, dict) or set(raw) != _STEP_KEYS:
            raise _fail(at, "each step needs exactly 'request' and 'expected'")
        req, exp = raw["request"], raw["expected"]
        if not isinstance(req, dict):
            raise _fail(at, "request must be an object")
        if set(req) - _REQUEST_KEYS:
            raise _fail(at, f"request: unknown fields {sorted(set(req) - _REQUEST_KEYS)}")
        if _REQUIRED_REQUEST_KEYS - set(req):
            raise _fail(at, f"request: missing fields {sorted(_REQUIRED_REQUEST_KEYS - set(req))}")
        offset = req["timestamp_offset_s"]
        if not isinstance(offset, int) or isinstance(offset, bool) or offset < 0:
            raise _fail(at, "request.timestamp_offset_s must be a non-negative integer")
        if not isinstance(exp, dict) or set(exp) - _EXPECTED_KEYS or "decision" not in exp:
            raise _fail(at, "expected must be {decision, risk_score}")
        try:
            decision = Decision(exp["decision"])
        except ValueError:
            raise _fail(at, f"expected.decision: unknown value {exp['decision']!r}") from None
        rs = exp.get("risk_score")
        if decision is not Decision.COOLDOWN_ACTIVE:
            if not isinstance(rs, int) or isinstance(rs, bool) or not 0 <= rs <= 100:
                raise _fail(at, "expected.risk_score must be an integer in [0, 100]")
        else:
            rs = None
        step = VectorStep(dict(req), decision, rs)
        try:
            step.to_request(EPOCH0)
        except ValidationError as exc:
            raise _fail(at, f"request: {exc}") from None
        steps.append(step)
    return SequenceVector(vid, tuple(steps), ordering, dict(overrides),
                          data.get("description", ""))


def _parse_file(path: Path) -> list[SequenceVector]:
    text = path.read_text(encoding="utf-8")
    if not text.strip():
        return []
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise VectorLoadError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    items = data if isinstance(data, list) else [data]
    return [parse_vector(item, f"{path}[{i}]" if isinstance(data, list) else str(path))
            for i, item in enumerate(items)]


def load_suite(path: str | Path) -> list[SequenceVector]:
    """Load vectors from a file (one vector or a JSON array) or a directory of *.json files."""
    path = Path(path)
    files = sorted(path.glob("*.json")) if path.is_dir() else [path]
    vectors: list[SequenceVector] = []
    for f in files:
        vectors.extend(_parse_file(f))
    seen: set[str] = set()
    for v in vectors:
        if v.vector_id in seen:
            raise VectorLoadError(f"{path}: duplicate vector_id {v.vector_id}")
        seen.add(v.vector_id)
    return vectors


def bundled_suite_path() -> Path:
    return Path(str(resources.files("acp_admission") / "vectors"))


def load_bundled_suite() -> list[SequenceVector]:
    return load_suite(bundled_suite_path())


def run_vector(vec: SequenceVector, base_policy: PolicyConfig, strict: bool = True,
               epoch0: int = EPOCH0) -> RunReport:
    try:
        policy = base_policy.with_overrides(vec.policy_overrides)
    except PolicyError as exc:
        raise VectorLoadError(f"[{vec.vector_id}] policy_overrides: {exc}") from None
    store = InMemoryStore()
    reports = []
    for i, step in enumerate(vec.steps):
        outcome = process(step.to_request(epoch0), store, policy, vec.ordering)
        actual = outcome.result
        ok = actual.decision is step.expected_decision and (
            step.expected_rs is None or actual.rs_final == step.expected_rs)
        reports.append(StepReport(i, step.expected_decision.value, step.expected_rs,
                                  actual.decision.value, actual.rs_final, ok))
        if strict and not ok:
            break
    return RunReport(vec.vector_id, tuple(reports), strict)


def run_suite(vectors: list[SequenceVector], base_policy: PolicyConfig,
              strict: bool = True) -> list[RunReport]:
    return [run_vector(v, base_policy, strict) for v in vectors]
