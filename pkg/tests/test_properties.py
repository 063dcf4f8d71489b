from __future__ import annotations

import dataclasses

import rfc8785
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from hypothesis.stateful import RuleBasedStateMachine, initialize, invariant, rule

from acp_admission.canonical import _encode, canonical_bytes
from acp_admission.engine import Decision, EvalRequest, evaluate, pattern_key
from acp_admission.execution import UpdateOrdering, process
from acp_admission.ledger import EventType, LedgerChain, compute_event_hash, verify_chain
from acp_admission.policy import PolicyConfig, default_policy
from acp_admission.stores import DelayedStore, InMemoryStore, NullStore
from reference_model import ModelState, in_window, model_step

T0 = 1_700_000_000

agents = st.sampled_from(["a", "b", "c"])
caps = st.sampled_from(["acp:cap:data.read", "acp:cap:data.write", "acp:cap:financial.payment",
                        "acp:cap:financial.transfer", "acp:cap:admin.configure", "acp:cap:misc.op"])
resources = st.sampled_from(["r1", "r2", "accounts/x"])
classes = st.sampled_from(["public", "sensitive", "restricted"])
flags = st.frozensets(st.sampled_from(["external_ip", "off_hours", "geo_outside", "untrusted_device"]))


@st.composite
def requests(draw, ts=None):
    return EvalRequest(draw(agents), draw(caps), draw(resources), draw(classes),
                       draw(st.integers(0, 4)), ts if ts is not None else draw(st.integers(T0, T0 + 3600)),
                       draw(flags))


json_scalars = st.one_of(st.booleans(), st.integers(-(2**53) + 1, 2**53 - 1), st.text())
json_values = st.recursive(
    json_scalars,
    lambda inner: st.one_of(st.lists(inner, max_size=4), st.dictionaries(st.text(), inner, max_size=4)),
    max_leaves=20,
)


@given(json_values)
def test_canonical_matches_rfc8785(value):
    assert canonical_bytes(value) == rfc8785.dumps(value)


@given(json_values)
def test_canonical_fast_path_matches_slow_path(value):
    out: list[str] = []
    _encode(value, out, lambda: "$")
    assert canonical_bytes(value) == "".join(out).encode()


@given(st.dictionaries(st.text(), json_scalars, max_size=6), st.randoms())
def test_canonical_ignores_insertion_order(d, rnd):
    items = list(d.items())
    rnd.shuffle(items)
    assert canonical_bytes(dict(items)) == canonical_bytes(d)


@given(st.lists(st.integers(0, 500), max_size=60), st.integers(1, 300), st.integers(0, 800))
def test_window_counts_match_brute_force(stamps, window, now):
    s = InMemoryStore()
    for t in stamps:
        s.add_request("a", t)
        s.add_denial("a", t)
        s.add_pattern("k", t)
    expected = in_window(stamps, window, now)
    assert s.count_requests("a", window, now) == expected
    assert s.count_denials("a", window, now) == expected
    assert s.count_pattern("k", window, now) == expected


@given(st.lists(st.tuples(st.sampled_from(["req", "den", "pat", "cool"]), agents, st.integers(0, 100)),
                max_size=40))
def test_delayed_store_equivalent_and_append_only(ops):
    plain, delayed = InMemoryStore(), DelayedStore(InMemoryStore(), 0)
    last = {}
    for kind, agent, t in ops:
        for s in (plain, delayed):
            {"req": s.add_request, "den": s.add_denial, "pat": s.add_pattern,
             "cool": s.set_cooldown}[kind](agent, t)
        for agent_ in ("a", "b", "c"):
            reads = (plain.count_requests(agent_, 50, 60), plain.count_denials(agent_, 50, 60),
                     plain.count_pattern(agent_, 50, 60))
            assert reads == (delayed.count_requests(agent_, 50, 60),
                             delayed.count_denials(agent_, 50, 60),
                             delayed.count_pattern(agent_, 50, 60))
            assert plain.cooldown_active(agent_, 60) == delayed.cooldown_active(agent_, 60)
            prev = last.get(agent_, (0, 0, 0))
            assert all(x >= y for x, y in zip(reads, prev))
            last[agent_] = reads


@given(st.lists(st.tuples(agents, st.integers(0, 100)), max_size=30))
def test_store_agent_isolation(ops):
    s = InMemoryStore()
    for agent, t in ops:
        if agent != "a":
            s.add_request(agent, t)
            s.add_denial(agent, t)
            s.set_cooldown(agent, t + 10)
    assert s.count_requests("a", 10**6, 200) == 0
    assert s.count_denials("a", 10**6, 200) == 0
    assert not s.cooldown_active("a", 50)


@given(requests(), st.integers(0, 30), st.integers(0, 10), st.integers(0, 10), st.booleans())
def test_safety_and_rs_range(req, n_req, n_den, n_pat, risk3):
    policy = default_policy().replace(engine_version="RISK_3_0" if risk3 else "RISK_2_0")
    store = InMemoryStore()
    for i in range(n_req):
        store.add_request(req.agent_id, req.timestamp - i % 50)
    for i in range(n_den):
        store.add_denial(req.agent_id, req.timestamp - i)
    key = pattern_key(req.agent_id, req.capability, req.resource)
    for i in range(n_pat):
        store.add_pattern(key, req.timestamp - i)
    r = evaluate(req, store, policy)
    assert 0 <= r.rs_final <= 100
    assert r.rs_final == min(100, r.breakdown.total)
    if r.decision is Decision.APPROVED:
        assert r.rs_final <= policy.thresholds_for(req.autonomy_level).approved_max
    if req.autonomy_level == 0:
        assert r.decision is Decision.DENIED
    assert evaluate(req, store, policy) == r


@given(requests())
def test_stateless_store_never_escalates_via_anomaly(req):
    r = evaluate(req, NullStore(), default_policy())
    assert r.breakdown.f_anom == 0


@given(st.dictionaries(st.sampled_from(["rule1_threshold_n", "rule2_threshold_x", "rule3_threshold_y",
                                        "cooldown_trigger_denials"]), st.integers(0, 50)),
       st.dictionaries(st.sampled_from(["x.y", "*.read", "fallback"]), st.integers(0, 100)))
def test_policy_round_trip(scalars, bases):
    p = default_policy().with_overrides({**scalars, "capability_base": bases})
    q = PolicyConfig.from_dict(p.to_dict())
    assert q == p and q.policy_hash == p.policy_hash


@settings(max_examples=30, suppress_health_check=[HealthCheck.too_slow])
@given(st.integers(2, 30), st.data())
def test_any_single_tamper_detected(n, data):
    chain = LedgerChain()
    for i in range(n):
        chain.append(EventType.AUTHORIZATION, T0 + i, {"i": i})
    events = list(chain.events)
    k = data.draw(st.integers(0, len(events) - 1))
    kind = data.draw(st.sampled_from(["payload", "timestamp", "delete", "swap", "rehash"]))
    if kind == "payload":
        events[k] = dataclasses.replace(events[k], payload={"i": -1})
    elif kind == "timestamp":
        events[k] = dataclasses.replace(events[k], timestamp=events[k].timestamp + 1)
    elif kind == "delete":
        del events[k]
    elif kind == "swap":
        j = (k + 1) % len(events)
        events[k], events[j] = events[j], events[k]
        k = min(k, j)
    else:
        forged = dataclasses.replace(events[k], payload={"forged": 1})
        events[k] = dataclasses.replace(forged, hash=compute_event_hash(forged.body()))
    v = verify_chain(events, expected_head=chain.head)
    assert not v and v.broken_at <= k + (1 if kind == "rehash" else 0)


class AdmissionMachine(RuleBasedStateMachine):
    """process() against the brute-force model, step by step."""

    @initialize(risk3=st.booleans(), update_first=st.booleans())
    def setup(self, risk3, update_first):
        self.policy = default_policy().replace(engine_version="RISK_3_0" if risk3 else "RISK_2_0")
        self.ordering = (UpdateOrdering.UPDATE_THEN_EVALUATE if update_first
                         else UpdateOrdering.EVALUATE_THEN_UPDATE)
        self.update_first = update_first
        self.store = InMemoryStore()
        self.model = ModelState()
        self.now = T0
        self.chain = LedgerChain()

    @rule(req=requests(ts=0), gap=st.sampled_from([0, 0, 1, 5, 30, 61, 301, 601]))
    def submit(self, req, gap):
        self.now += gap
        req = dataclasses.replace(req, timestamp=self.now)
        out = process(req, self.store, self.policy, self.ordering)
        decision, rs, rules = model_step(self.model, req, self.policy, self.update_first)
        assert out.result.decision.value == decision
        assert out.result.rs_final == rs
        assert {r.value for r in out.result.breakdown.rules_fired} == rules
        self.chain.append(EventType.AUTHORIZATION, req.timestamp, {"d": decision})

    @invariant()
    def ledger_valid(self):
        if hasattr(self, "chain"):
            assert verify_chain(self.chain.events)


AdmissionMachine.TestCase.settings = settings(max_examples=60, stateful_step_count=40,
                                              deadline=None)
TestAdmissionMachine = AdmissionMachine.TestCase
