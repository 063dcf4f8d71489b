"""Append-only, hash-chained audit ledger.

Each event hash is ``SHA-256(canonical(event minus hash/signature) || prev_hash)``
where ``prev_hash`` is appended as its 64 ASCII hex characters. The first
event is GENESIS with an all-zero ``prev_hash``. When a signing key is
given, the event carries an Ed25519 signature over the 32-byte hash digest,
base64url-encoded without padding.
"""

from __future__ import annotations

import base64
import binascii
import hashlib
import json
import re
import threading
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey, Ed25519PublicKey
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

from .canonical import CanonicalizationError, canonical_bytes
from .engine import EvalRequest
from .execution import StepOutcome

ZERO_HASH = "0" * 64
_HEX64 = re.compile(r"[0-9a-f]{64}\Z")

SigningKey = Ed25519PrivateKey
VerifyKey = Ed25519PublicKey


class LedgerError(ValueError):
    pass


class EventType(str, Enum):
    GENESIS = "GENESIS"
    AUTHORIZATION = "AUTHORIZATION"
    RISK_EVALUATION = "RISK_EVALUATION"


def b64url(data: bytes) -> str:
    return base64.urlsafe_b64encode(data).rstrip(b"=").decode("ascii")


def b64url_decode(text: str) -> bytes:
    if not isinstance(text, str) or "=" in text:
        raise ValueError("expected unpadded base64url text")
    return base64.urlsafe_b64decode(text + "=" * (-len(text) % 4))


def generate_keypair() -> tuple[SigningKey, VerifyKey]:
    sk = Ed25519PrivateKey.generate()
    return sk, sk.public_key()


def signing_key_from_seed(seed: bytes) -> SigningKey:
    return Ed25519PrivateKey.from_private_bytes(seed)


def verify_key_bytes(vk: VerifyKey) -> bytes:
    return vk.public_bytes(Encoding.Raw, PublicFormat.Raw)


@dataclass(frozen=True)
class LedgerEvent:
    event_id: str
    event_type: EventType
    timestamp: int
    payload: Mapping[str, Any]
    prev_hash: str
    hash: str
    signature: str | None = None

    def body(self) -> dict[str, Any]:
        """Fields covered by the hash."""
        return {
            "event_id": self.event_id,
            "event_type": EventType(self.event_type).value,
            "timestamp": self.timestamp,
            "payload": dict(self.payload),
            "prev_hash": self.prev_hash,
        }

    def to_dict(self) -> dict[str, Any]:
        out = self.body()
        out["hash"] = self.hash
        if self.signature is not None:
            out["signature"] = self.signature
        return out

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> LedgerEvent:
        required = {"event_id", "event_type", "timestamp", "payload", "prev_hash", "hash"}
        unknown = set(data) - required - {"signature"}
        if unknown:
            raise LedgerError(f"unknown event fields: {sorted(unknown)}")
        missing = required - set(data)
        if missing:
            raise LedgerError(f"missing event fields: {sorted(missing)}")
        try:
            event_type = EventType(data["event_type"])
        except ValueError as exc:
            raise LedgerError(str(exc)) from exc
        if not isinstance(data["payload"], dict):
            raise LedgerError("payload must be an object")
        return cls(
            event_id=data["event_id"],
            event_type=event_type,
            timestamp=data["timestamp"],
            payload=data["payload"],
            prev_hash=data["prev_hash"],
            hash=data["hash"],
            signature=data.get("signature"),
        )


def compute_event_hash(body: Mapping[str, Any]) -> str:
    h = hashlib.sha256(canonical_bytes(body))
    h.update(str(body["prev_hash"]).encode("ascii"))
    return h.hexdigest()


def _seal(event_id: str, event_type: EventType, timestamp: int, payload: Mapping[str, Any],
          prev_hash: str, key: SigningKey | None) -> LedgerEvent:
    if not isinstance(timestamp, int) or isinstance(timestamp, bool) or timestamp < 0:
        raise LedgerError(f"timestamp must be a non-negative integer, got {timestamp!r}")
    draft = LedgerEvent(event_id, EventType(event_type), timestamp, dict(payload), prev_hash, "")
    digest = compute_event_hash(draft.body())
    signature = b64url(key.sign(bytes.fromhex(digest))) if key is not None else None
    return LedgerEvent(draft.event_id, draft.event_type, timestamp, draft.payload,
                       prev_hash, digest, signature)


class LedgerChain:
    """Ordered event list that only ever grows.

    Appends are serialized by an internal lock; events themselves are
    frozen, so the prefix of a chain never changes.
    """

    def __init__(self, events: Iterable[LedgerEvent] = ()) -> None:
        self._events: list[LedgerEvent] = list(events)
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._events)

    def __getitem__(self, index):
        return self._events[index]

    def __iter__(self):
        return iter(list(self._events))

    @property
    def events(self) -> tuple[LedgerEvent, ...]:
        return tuple(self._events)

    @property
    def head(self) -> str:
        return self._events[-1].hash if self._events else ZERO_HASH

    def append(self, event_type: EventType | str, timestamp: int, payload: Mapping[str, Any],
               key: SigningKey | None = None, event_id: str | None = None) -> LedgerEvent:
        """Append one event, creating GENESIS first on an empty chain."""
        event_type = EventType(event_type)
        with self._lock:
            if event_type is EventType.GENESIS and self._events:
                raise LedgerError("GENESIS must be the first event")
            new: list[LedgerEvent] = []
            if not self._events and event_type is not EventType.GENESIS:
                new.append(_seal("evt-00000000", EventType.GENESIS, timestamp, {},
                                 ZERO_HASH, key))
            prev = new[-1].hash if new else self.head
            try:
                event = _seal(event_id or f"evt-{len(self._events) + len(new):08d}",
                              event_type, timestamp, payload, prev, key)
            except CanonicalizationError as exc:
                raise LedgerError(str(exc)) from exc
            new.append(event)
            self._events.extend(new)
            return event


@dataclass(frozen=True)
class Verdict:
    ok: bool
    broken_at: int | None = None
    reason: str = ""

    def __bool__(self) -> bool:
        return self.ok


def _check_signature(event: LedgerEvent, key: VerifyKey) -> str | None:
    if event.signature is None:
        return "missing signature"
    try:
        key.verify(b64url_decode(event.signature), bytes.fromhex(event.hash))
    except (InvalidSignature, ValueError, binascii.Error):
        return "bad signature"
    return None


def verify_chain(events: Sequence[LedgerEvent], key: VerifyKey | None = None,
                 anchor: str | None = None, expected_head: str | None = None) -> Verdict:
    """Recompute every hash and link; report the first inconsistency.

    ``anchor`` lets a slice starting mid-chain be checked against the hash
    of the event before it. ``expected_head`` pins the last hash, which is
    the only way to notice truncation at the tail.
    """
    prev = anchor
    for i, ev in enumerate(events):
        try:
            etype = EventType(ev.event_type)
        except ValueError:
            return Verdict(False, i, "unknown event type")
        if not isinstance(ev.prev_hash, str) or not _HEX64.match(ev.prev_hash):
            return Verdict(False, i, "malformed prev_hash")
        if prev is None:
            if etype is not EventType.GENESIS or ev.prev_hash != ZERO_HASH:
                return Verdict(False, i, "chain does not start with GENESIS")
        else:
            if etype is EventType.GENESIS:
                return Verdict(False, i, "GENESIS after the first event")
            if ev.prev_hash != prev:
                return Verdict(False, i, "prev_hash does not link to previous event")
        try:
            digest = compute_event_hash(ev.body())
        except (CanonicalizationError, TypeError, ValueError) as exc:
            return Verdict(False, i, f"cannot canonicalize: {exc}")
        if digest != ev.hash:
            return Verdict(False, i, "hash mismatch")
        if key is not None:
            problem = _check_signature(ev, key)
            if problem:
                return Verdict(False, i, problem)
        prev = ev.hash
    if expected_head is not None and (prev or ZERO_HASH) != expected_head:
        return Verdict(False, len(events), "head mismatch")
    return Verdict(True)


def outcome_payload(outcome: StepOutcome, req: EvalRequest) -> dict[str, Any]:
    r = outcome.result
    return {
        "agent_id": req.agent_id,
        "capability": req.capability,
        "resource": req.resource,
        "resource_class": req.resource_class.value,
        "autonomy_level": req.autonomy_level,
        "decision": r.decision.value,
        "rs_final": r.rs_final,
        "factors": r.breakdown.to_dict(),
        "reason": r.reason,
        "policy_hash": r.policy_hash,
        "cooldown_entered": outcome.cooldown_entered,
    }


def record_outcome(chain: LedgerChain, outcome: StepOutcome, req: EvalRequest,
                   key: SigningKey | None = None) -> LedgerEvent:
    return chain.append(EventType.AUTHORIZATION, req.timestamp,
                        outcome_payload(outcome, req), key=key)


def write_ndjson(events: Iterable[LedgerEvent], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ev in events:
            fh.write(canonical_bytes(ev.to_dict()).decode("utf-8"))
            fh.write("\n")


def read_ndjson(path: str | Path) -> list[LedgerEvent]:
    events = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
                if not isinstance(data, dict):
                    raise LedgerError("each line must be a JSON object")
                events.append(LedgerEvent.from_dict(data))
            except (json.JSONDecodeError, LedgerError) as exc:
                raise LedgerError(f"{path}:{lineno}: {exc}") from exc
    return events
