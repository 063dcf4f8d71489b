from __future__ import annotations

import dataclasses
import json

import pytest
import rfc8785

from acp_admission.canonical import CanonicalizationError, canonical_bytes
from acp_admission.engine import Decision
from acp_admission.execution import process
from acp_admission.ledger import (
    ZERO_HASH,
    EventType,
    LedgerChain,
    LedgerError,
    b64url,
    b64url_decode,
    compute_event_hash,
    generate_keypair,
    read_ndjson,
    record_outcome,
    signing_key_from_seed,
    verify_chain,
    write_ndjson,
)
from conftest import T0, make_req

SAMPLE_EVENT = {
    "event_id": "evt-00000001",
    "event_type": "AUTHORIZATION",
    "timestamp": 1_700_000_000,
    "payload": {
        "agent_id": "agent-ü",
        "decision": "DENIED",
        "rs_final": 80,
        "factors": {"rules_fired": [], "f_res": 45, "base": 35},
        "note": "tab\there \"q\" \u2028 \U0001F600",
        "e": "é",
        "ok": True,
    },
    "prev_hash": ZERO_HASH,
}

# produced once, then confirmed byte-for-byte against the rfc8785 package
SAMPLE_CANONICAL = (
    '{"event_id":"evt-00000001","event_type":"AUTHORIZATION","payload":{"agent_id":"agent-ü",'
    '"decision":"DENIED","e":"é","factors":{"base":35,"f_res":45,"rules_fired":[]},'
    '"note":"tab\\there \\"q\\" \u2028 \U0001F600","ok":true,"rs_final":80},'
    '"prev_hash":"' + ZERO_HASH + '","timestamp":1700000000}'
).encode("utf-8")


def test_canonical_key_order_independent():
    assert canonical_bytes({"b": 1, "a": 2}) == canonical_bytes({"a": 2, "b": 1}) == b'{"a":2,"b":1}'
    assert canonical_bytes({}) == b"{}"


def test_canonical_sample_pinned():
    assert canonical_bytes(SAMPLE_EVENT) == SAMPLE_CANONICAL
    assert rfc8785.dumps(SAMPLE_EVENT) == SAMPLE_CANONICAL


def test_canonical_utf16_key_order():
    # code point order would put U+E000 first; UTF-16 puts the emoji's D83D lead unit first
    value = {"\ue000": 1, "\U0001F600": 2, "a": 3}
    out = canonical_bytes(value)
    assert out == rfc8785.dumps(value)
    assert out.index("\U0001F600".encode()) < out.index("\ue000".encode())


@pytest.mark.parametrize("bad", [1.5, {"a": None}, {1: 2}, 2**53, {"s": {1, 2}}, "\ud800"])
def test_canonical_rejects(bad):
    with pytest.raises(CanonicalizationError):
        canonical_bytes(bad)


def test_b64url_no_padding():
    assert b64url(b"\xff\xfe") == "__4"
    assert b64url_decode("__4") == b"\xff\xfe"
    with pytest.raises(ValueError):
        b64url_decode("__4=")


def build_chain(n, key=None):
    chain = LedgerChain()
    for i in range(n):
        chain.append(EventType.AUTHORIZATION, T0 + i, {"i": i, "decision": "APPROVED"}, key=key)
    return chain


def test_append_to_empty_creates_genesis():
    chain = LedgerChain()
    ev = chain.append(EventType.AUTHORIZATION, T0, {"x": 1})
    assert len(chain) == 2
    g = chain[0]
    assert g.event_type is EventType.GENESIS and g.prev_hash == ZERO_HASH
    assert ev.prev_hash == g.hash and chain.head == ev.hash
    assert [e.event_id for e in chain] == ["evt-00000000", "evt-00000001"]


def test_hash_layout():
    chain = build_chain(2)
    ev = chain[1]
    import hashlib

    expected = hashlib.sha256(rfc8785.dumps(ev.body()) + ev.prev_hash.encode("ascii")).hexdigest()
    assert ev.hash == expected == compute_event_hash(ev.body())


def test_only_genesis_has_zero_prev():
    chain = build_chain(10)
    assert [e.prev_hash == ZERO_HASH for e in chain].count(True) == 1
    with pytest.raises(LedgerError):
        chain.append(EventType.GENESIS, T0, {})


def test_append_never_mutates_prefix():
    chain = build_chain(5)
    before = [e.to_dict() for e in chain]
    chain.append(EventType.AUTHORIZATION, T0, {"z": 1})
    assert [e.to_dict() for e in chain][:6] == before


def test_append_rejects_bad_payload_atomically():
    chain = LedgerChain()
    with pytest.raises(LedgerError):
        chain.append(EventType.AUTHORIZATION, T0, {"x": 0.5})
    assert len(chain) == 0
    with pytest.raises(LedgerError):
        chain.append(EventType.AUTHORIZATION, -1, {})


def test_signed_chain_verifies():
    sk, vk = generate_keypair()
    chain = build_chain(5, key=sk)
    assert verify_chain(chain.events, key=vk)
    _, other = generate_keypair()
    v = verify_chain(chain.events, key=other)
    assert not v and v.broken_at == 0 and v.reason == "bad signature"


def test_unsigned_chain_fails_signature_check():
    _, vk = generate_keypair()
    v = verify_chain(build_chain(2).events, key=vk)
    assert v.broken_at == 0 and v.reason == "missing signature"


def test_seeded_key_is_deterministic():
    a = build_chain(3, key=signing_key_from_seed(bytes(32)))
    b = build_chain(3, key=signing_key_from_seed(bytes(32)))
    assert [e.signature for e in a] == [e.signature for e in b]


def test_payload_tamper_detected():
    chain = build_chain(10)
    events = list(chain.events)
    k = 4
    events[k] = dataclasses.replace(events[k], payload={**events[k].payload, "decision": "DENIED"})
    v = verify_chain(events)
    assert not v and v.broken_at == k and v.reason == "hash mismatch"


def test_rehashed_tamper_breaks_next_link():
    chain = build_chain(10)
    events = list(chain.events)
    k = 4
    forged = dataclasses.replace(events[k], payload={"forged": True})
    forged = dataclasses.replace(forged, hash=compute_event_hash(forged.body()))
    events[k] = forged
    v = verify_chain(events)
    assert v.broken_at == k + 1 and "link" in v.reason


def test_interior_deletion_detected():
    events = list(build_chain(10).events)
    del events[6]
    v = verify_chain(events)
    assert v.broken_at == 6


def test_tail_deletion_needs_expected_head():
    chain = build_chain(10)
    events = list(chain.events)[:-1]
    assert verify_chain(events)
    v = verify_chain(events, expected_head=chain.head)
    assert not v and v.broken_at == len(events)


def test_anchor_verifies_slice():
    chain = build_chain(10)
    events = chain.events
    assert verify_chain(events[4:], anchor=events[3].hash)
    assert not verify_chain(events[4:])


def test_prefix_closure():
    events = build_chain(8).events
    for i in range(1, len(events) + 1):
        assert verify_chain(events[:i])


def test_record_outcome_payload(policy, store):
    chain = LedgerChain()
    req = make_req(cap="acp:cap:financial.transfer", cls="restricted")
    ev = record_outcome(chain, process(req, store, policy), req)
    assert ev.event_type is EventType.AUTHORIZATION
    assert ev.payload["decision"] == "DENIED" and ev.payload["rs_final"] == 80
    assert ev.payload["factors"]["f_res"] == 45
    assert ev.payload["policy_hash"] == policy.policy_hash
    assert ev.timestamp == req.timestamp


def test_cooldown_outcome_is_recorded(policy, store):
    chain = LedgerChain()
    for _ in range(3):
        req = make_req(cap="acp:cap:financial.transfer", cls="restricted")
        record_outcome(chain, process(req, store, policy), req)
    req = make_req()
    out = process(req, store, policy)
    assert out.result.decision is Decision.COOLDOWN_ACTIVE
    ev = record_outcome(chain, out, req)
    assert ev.payload["decision"] == "COOLDOWN_ACTIVE"
    assert chain[3].payload["cooldown_entered"] is True


def test_ndjson_round_trip(tmp_path):
    sk, vk = generate_keypair()
    chain = build_chain(4, key=sk)
    path = tmp_path / "ledger.ndjson"
    write_ndjson(chain, path)
    lines = path.read_text().splitlines()
    assert len(lines) == 5 and all(json.loads(x) for x in lines)
    events = read_ndjson(path)
    assert events == list(chain.events)
    assert verify_chain(events, key=vk, expected_head=chain.head)


@pytest.mark.parametrize("line", ["{bad", "[1,2]", '{"event_id": "x"}'])
def test_ndjson_rejects_malformed(tmp_path, line):
    path = tmp_path / "ledger.ndjson"
    write_ndjson(build_chain(1), path)
    with open(path, "a") as fh:
        fh.write(line + "\n")
    with pytest.raises(LedgerError, match=":3:"):
        read_ndjson(path)
