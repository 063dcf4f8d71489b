"""HTTP admission service.

The request handling lives in ``AdmissionService`` so it can be exercised
without a web server; ``create_app`` only maps it onto FastAPI routes.
There is no authentication on any endpoint.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from pathlib import Path
from typing import Any

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .canonical import canonical_bytes
from .engine import EvalRequest, ValidationError, fail_closed_result
from .execution import StepOutcome, UpdateOrdering, process
from .ledger import (
    LedgerChain,
    LedgerError,
    SigningKey,
    read_ndjson,
    record_outcome,
    verify_chain,
)
from .policy import PolicyConfig, default_policy, load_policy
from .stores import InMemoryStore, TraceStore

log = logging.getLogger(__name__)

POLICY_ENV = "ACP_POLICY_FILE"
DECLARATION_DATE = "2026-10-19"

_WIRE_FIELDS = {"agent_id", "capability", "resource", "resource_class", "autonomy_level",
                "context_flags", "history_flags", "timestamp"}


class AdmissionService:
    """Policy, store and ledger for one server instance."""

    def __init__(self, policy: PolicyConfig | None = None, store: TraceStore | None = None,
                 ordering: UpdateOrdering = UpdateOrdering.EVALUATE_THEN_UPDATE,
                 ledger_path: str | Path | None = None, signing_key: SigningKey | None = None,
                 clock=time.time) -> None:
        self.policy = policy or default_policy()
        self.store = store if store is not None else InMemoryStore()
        self.ordering = UpdateOrdering(ordering)
        self.signing_key = signing_key
        self.clock = clock
        self.ledger_path = Path(ledger_path) if ledger_path else None
        self.chain = LedgerChain(self._load_ledger())
        # one writer at a time: process() and the ledger append happen together
        self._gate = threading.Lock()
        if not len(self.chain):
            self._append_genesis()

    def _load_ledger(self) -> list:
        if self.ledger_path is None or not self.ledger_path.exists():
            return []
        events = read_ndjson(self.ledger_path)
        verdict = verify_chain(events)
        if not verdict:
            raise LedgerError(f"{self.ledger_path}: broken at {verdict.broken_at}: {verdict.reason}")
        return events

    def _persist(self, event) -> None:
        if self.ledger_path is None:
            return
        with open(self.ledger_path, "a", encoding="utf-8") as fh:
            fh.write(canonical_bytes(event.to_dict()).decode("utf-8") + "\n")

    def _append_genesis(self) -> None:
        event = self.chain.append("GENESIS", int(self.clock()), {}, key=self.signing_key)
        self._persist(event)

    def set_policy(self, policy: PolicyConfig) -> None:
        with self._gate:
            self.policy = policy

    def parse(self, body: Any) -> EvalRequest:
        if not isinstance(body, dict):
            raise ValidationError("body must be a JSON object")
        unknown = set(body) - _WIRE_FIELDS
        if unknown:
            raise ValidationError(f"unknown fields: {sorted(unknown)}")
        data = dict(body)
        if data.get("timestamp") is None:
            data["timestamp"] = int(self.clock())
        for name in ("context_flags", "history_flags"):
            if not isinstance(data.get(name, []), list):
                raise ValidationError(f"{name} must be a list")
        return EvalRequest.from_dict(data)

    def admit(self, body: Any) -> tuple[int, dict[str, Any]]:
        """Handle one admission body; returns (HTTP status, response JSON)."""
        try:
            req = self.parse(body)
        except ValidationError as exc:
            return 400, {"error": "invalid_request", "detail": str(exc)}

        with self._gate:
            policy = self.policy
            try:
                outcome = process(req, self.store, policy, self.ordering)
            except Exception as exc:
                log.exception("admission failed")
                outcome = StepOutcome(fail_closed_result(policy), error=str(exc))
            if outcome.error:
                log.warning("fail-closed admission for %s: %s", req.agent_id, outcome.error)
                outcome = StepOutcome(fail_closed_result(policy), error=outcome.error)
            status = 503 if outcome.error else 200
            try:
                event = record_outcome(self.chain, outcome, req, key=self.signing_key)
                self._persist(event)
                index: int | None = len(self.chain) - 1
            except Exception:
                log.exception("ledger append failed")
                outcome = StepOutcome(fail_closed_result(policy), error="ledger failure")
                status, index = 503, None

        r = outcome.result
        return status, {
            "decision": r.decision.value,
            "risk_score": r.rs_final,
            "factors": r.breakdown.to_dict(),
            "reason": r.reason,
            "policy_hash": r.policy_hash,
            "ledger_index": index,
        }

    def conformance(self) -> dict[str, Any]:
        return {
            "implemented": ["ACP-RISK-2.0", "ACP-RISK-3.0", "ACP-LEDGER-1.3"],
            "engine_version": self.policy.engine_version.value,
            "policy_hash": self.policy.policy_hash,
            "declaration_date": DECLARATION_DATE,
        }

    def audit_query(self, start: int, end: int) -> list[dict[str, Any]]:
        n = len(self.chain)
        if not 0 <= start <= end <= n:
            raise IndexError(f"range [{start}, {end}) outside ledger of length {n}")
        return [ev.to_dict() for ev in self.chain.events[start:end]]

    def health(self) -> tuple[int, dict[str, Any]]:
        try:
            now = int(self.clock())
            self.store.cooldown_active("__health__", now)
            self.store.count_requests("__health__", 1, now)
            head = self.chain.head
        except Exception as exc:
            return 503, {"status": "degraded", "detail": str(exc)}
        return 200, {"status": "ok", "ledger_length": len(self.chain), "ledger_head": head}


def create_app(service: AdmissionService | None = None) -> FastAPI:
    svc = service or AdmissionService(policy=policy_from_env())
    app = FastAPI(title="acp-admission")
    app.state.service = svc

    async def admission(request: Request) -> JSONResponse:
        try:
            body = json.loads(await request.body())
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            return JSONResponse({"error": "invalid_request", "detail": str(exc)}, status_code=400)
        status, payload = svc.admit(body)
        return JSONResponse(payload, status_code=status)

    app.add_api_route("/acp/v1/admission", admission, methods=["POST"])
    app.add_api_route("/admission", admission, methods=["POST"])

    @app.get("/acp/v1/conformance")
    def conformance() -> dict[str, Any]:
        return svc.conformance()

    @app.get("/acp/v1/audit/query")
    def audit_query(request: Request) -> JSONResponse:
        q = request.query_params
        try:
            start = int(q.get("from", 0))
            end = int(q.get("to", len(svc.chain)))
            events = svc.audit_query(start, end)
        except (ValueError, IndexError) as exc:
            return JSONResponse({"error": "invalid_range", "detail": str(exc)}, status_code=400)
        return JSONResponse(events)

    @app.get("/health")
    def health() -> JSONResponse:
        status, payload = svc.health()
        return JSONResponse(payload, status_code=status)

    return app


def policy_from_env(path: str | Path | None = None) -> PolicyConfig:
    """Policy from ``path``, else from $ACP_POLICY_FILE, else the defaults."""
    path = path or os.environ.get(POLICY_ENV)
    return load_policy(path) if path else default_policy()
