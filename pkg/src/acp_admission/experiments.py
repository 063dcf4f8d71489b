"""Adversarial and comparative experiments over the admission engine.

Every experiment except the latency sweep runs on a fixed clock with a
single worker, so counts, trajectories and ledger hashes are identical on
every run. Expected outcomes are kept next to each runner and ``passed``
on the report says whether the run reproduced them.
"""

from __future__ import annotations

import csv
import json
import statistics
import threading
import time
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Sequence

from .engine import Decision, EvalRequest, Rule, evaluate
from .execution import StepOutcome, UpdateOrdering, process
from .ledger import LedgerChain, record_outcome
from .policy import EngineVersion, PolicyConfig, ResourceClass, default_policy
from .stores import DelayedStore, InMemoryStore, InstrumentedStore, NullStore, TraceStore

EPOCH0 = 1_700_000_000

ETU = UpdateOrdering.EVALUATE_THEN_UPDATE
UTE = UpdateOrdering.UPDATE_THEN_EVALUATE

CSV_HEADER = ["experiment_id", "approved", "escalated", "denied", "cooldown", "pass"]


class ExperimentId(str, Enum):
    EXP1 = "EXP1"
    EXP2 = "EXP2"
    EXP3B = "EXP3B"
    EXP4 = "EXP4"
    EXP5 = "EXP5"
    EXP6 = "EXP6"
    EXP7 = "EXP7"


class ClockMode(str, Enum):
    FIXED = "FIXED"
    REAL = "REAL"


class Exp4Case(str, Enum):
    BASELINE = "BASELINE"
    SEQUENTIAL = "SEQUENTIAL"
    CONCURRENT = "CONCURRENT"
    NEAR_IDENTICAL = "NEAR_IDENTICAL"


class Exp7Scenario(str, Enum):
    CLEAN = "CLEAN"
    MIXING = "MIXING"
    SAME_CONTEXT_BURST = "SAME_CONTEXT_BURST"


def _zero_counts() -> dict[str, int]:
    return {d.value: 0 for d in Decision}


@dataclass
class ExperimentReport:
    experiment_id: str
    decision_counts: dict[str, int] = field(default_factory=_zero_counts)
    trajectory: list[tuple[int, str, int]] = field(default_factory=list)
    milestones: dict[str, int] = field(default_factory=dict)
    throughput_rps: float | None = None
    passed: bool = False
    params: dict[str, Any] = field(default_factory=dict)
    details: dict[str, Any] = field(default_factory=dict)
    metrics: dict[str, float] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(self.decision_counts.values())

    def count(self, decision: Decision) -> int:
        return self.decision_counts[decision.value]

    def to_dict(self) -> dict[str, Any]:
        return {
            "experiment_id": self.experiment_id,
            "params": self.params,
            "decision_counts": self.decision_counts,
            "milestones": self.milestones,
            "throughput_rps": self.throughput_rps,
            "metrics": self.metrics,
            "details": self.details,
            "pass": self.passed,
            "trajectory": [list(t) for t in self.trajectory],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ExperimentReport:
        return cls(
            experiment_id=data["experiment_id"],
            decision_counts=dict(data["decision_counts"]),
            trajectory=[tuple(t) for t in data.get("trajectory", [])],
            milestones=dict(data.get("milestones", {})),
            throughput_rps=data.get("throughput_rps"),
            passed=data["pass"],
            params=dict(data.get("params", {})),
            details=dict(data.get("details", {})),
            metrics=dict(data.get("metrics", {})),
        )

    def summary(self) -> str:
        c = self.decision_counts
        label = self.experiment_id
        case = self.params.get("case") or self.params.get("scenario")
        if case:
            label += f"/{case}"
        if "version" in self.params:
            label += f"/{self.params['version']}"
        line = (f"{label}: approved={c['APPROVED']} escalated={c['ESCALATED']} "
                f"denied={c['DENIED']} cooldown={c['COOLDOWN_ACTIVE']}")
        if self.throughput_rps is not None:
            line += f" rps={self.throughput_rps:.0f}"
        return f"{line} -> {'PASS' if self.passed else 'FAIL'}"


@dataclass(frozen=True)
class ExperimentConfig:
    experiment_id: ExperimentId
    params: dict[str, Any] = field(default_factory=dict)
    clock_mode: ClockMode = ClockMode.FIXED

    def __post_init__(self) -> None:
        object.__setattr__(self, "experiment_id", ExperimentId(self.experiment_id))
        object.__setattr__(self, "clock_mode", ClockMode(self.clock_mode))
        allowed = _PARAMS[self.experiment_id]
        unknown = set(self.params) - set(allowed)
        if unknown:
            raise ValueError(f"{self.experiment_id.value}: unknown params {sorted(unknown)}")
        if (self.experiment_id is ExperimentId.EXP3B) != (self.clock_mode is ClockMode.REAL):
            raise ValueError("only EXP3B runs on the real clock")


_PARAMS: dict[ExperimentId, tuple[str, ...]] = {
    ExperimentId.EXP1: ("total",),
    ExperimentId.EXP2: ("agents", "per_agent"),
    ExperimentId.EXP3B: ("delays", "workers", "requests", "warmup"),
    ExperimentId.EXP4: ("case", "serialized"),
    ExperimentId.EXP5: ("total",),
    ExperimentId.EXP6: ("version", "primes"),
    ExperimentId.EXP7: ("scenario", "version"),
}


def _req(agent: str, cap: str, resource: str, cls: ResourceClass, ts: int = EPOCH0,
         level: int = 2) -> EvalRequest:
    return EvalRequest(agent, cap, resource, cls, level, ts)


def high_risk(agent: str, ts: int = EPOCH0) -> EvalRequest:
    return _req(agent, "acp:cap:financial.transfer", "accounts/treasury",
                ResourceClass.RESTRICTED, ts)


def low_risk(agent: str, ts: int = EPOCH0, resource: str = "reports/daily") -> EvalRequest:
    return _req(agent, "acp:cap:data.read", resource, ResourceClass.PUBLIC, ts)


class _Recorder:
    """Runs requests through the execution contract and logs every step."""

    def __init__(self, policy: PolicyConfig, ordering: UpdateOrdering,
                 store: TraceStore | None = None) -> None:
        self.policy = policy
        self.ordering = ordering
        self.store = store if store is not None else InMemoryStore()
        self.chain = LedgerChain()
        self.outcomes: list[StepOutcome] = []
        self.counts = _zero_counts()
        self.trajectory: list[tuple[int, str, int]] = []

    def step(self, req: EvalRequest) -> StepOutcome:
        outcome = process(req, self.store, self.policy, self.ordering)
        if outcome.error:
            raise RuntimeError(f"experiment step failed: {outcome.error}")
        record_outcome(self.chain, outcome, req)
        r = outcome.result
        self.trajectory.append((len(self.outcomes), r.decision.value, r.rs_final))
        self.outcomes.append(outcome)
        self.counts[r.decision.value] += 1
        return outcome

    def decisions(self) -> list[Decision]:
        return [o.result.decision for o in self.outcomes]

    def report(self, experiment_id: str, **kw: Any) -> ExperimentReport:
        details = kw.pop("details", {})
        details.setdefault("ledger_length", len(self.chain))
        details.setdefault("ledger_head", self.chain.head)
        return ExperimentReport(experiment_id, dict(self.counts), list(self.trajectory),
                                details=details, **kw)


def _first(decisions: Sequence[Decision], target: Decision) -> int | None:
    return next((i for i, d in enumerate(decisions) if d is target), None)


def run_exp1(total: int = 500, policy: PolicyConfig | None = None) -> ExperimentReport:
    """Cooldown evasion: one agent alternates high-risk and low-risk requests.

    ``first_block`` is the number of requests processed before the first
    COOLDOWN_ACTIVE decision.
    """
    if total < 5:
        raise ValueError("total must be at least 5")
    rec = _Recorder(policy or default_policy(), ETU)
    agent = "agent-evasion"
    denial_counts = []
    for i in range(total):
        rec.step(high_risk(agent) if i % 2 == 0 else low_risk(agent))
        denial_counts.append(rec.store.count_denials(agent, rec.policy.rule2_window_s, EPOCH0))
    decisions = rec.decisions()
    denied_at = [i for i, d in enumerate(decisions) if d is Decision.DENIED]
    first_block = _first(decisions, Decision.COOLDOWN_ACTIVE)
    monotone = all(a <= b for a, b in zip(denial_counts, denial_counts[1:]))
    expected = {"APPROVED": 2, "ESCALATED": 0, "DENIED": 3, "COOLDOWN_ACTIVE": total - 5}
    passed = (rec.counts == expected and denied_at == [0, 2, 4] and first_block == 5
              and monotone and rec.trajectory[0][2] == 80)
    return rec.report(
        "EXP1", milestones={"first_block": first_block} if first_block is not None else {},
        passed=passed, params={"total": total},
        details={"denied_indices": denied_at, "denial_counter_monotone": monotone},
    )


def run_exp2(agents: int = 100, per_agent: int = 10,
             policy: PolicyConfig | None = None) -> ExperimentReport:
    """Distributed attack: N agents each send ``per_agent`` high-risk requests.

    Agents are interleaved round-robin.
    """
    if agents < 1 or per_agent < 3:
        raise ValueError("need at least one agent and three requests per agent")
    rec = _Recorder(policy or default_policy(), ETU)
    ids = [f"agent-{k:05d}" for k in range(agents)]
    per: dict[str, list[Decision]] = {a: [] for a in ids}
    for _ in range(per_agent):
        for a in ids:
            per[a].append(rec.step(high_risk(a)).result.decision)
    pattern = [Decision.DENIED] * 3 + [Decision.COOLDOWN_ACTIVE] * (per_agent - 3)
    each_blocked_after_3 = all(d == pattern for d in per.values())
    expected = {"APPROVED": 0, "ESCALATED": 0, "DENIED": 3 * agents,
                "COOLDOWN_ACTIVE": (per_agent - 3) * agents}
    return rec.report(
        "EXP2", passed=rec.counts == expected and each_blocked_after_3,
        params={"agents": agents, "per_agent": per_agent},
        details={"each_agent_blocked_after_3": each_blocked_after_3},
    )


EXP4_EXPECTED = {
    Exp4Case.BASELINE: {"ESCALATED": 0, "DENIED": 0, "COOLDOWN_ACTIVE": 0},
    Exp4Case.SEQUENTIAL: {"ESCALATED": 3, "DENIED": 3, "COOLDOWN_ACTIVE": 4},
    Exp4Case.CONCURRENT: {"ESCALATED": 3, "DENIED": 3, "COOLDOWN_ACTIVE": 14},
    Exp4Case.NEAR_IDENTICAL: {"ESCALATED": 10, "DENIED": 0, "COOLDOWN_ACTIVE": 0},
}
EXP4_SEQUENTIAL_RS = [55, 55, 55, 70, 70, 70]


def exp4_policy(base: PolicyConfig | None = None) -> PolicyConfig:
    """Policy for the replay experiment: financial.transfer base raised to 40."""
    return (base or default_policy()).with_overrides(
        {"capability_base": {"financial.transfer": 40}})


def _replay(agent: str, resource: str = "accounts/sensitive-001") -> EvalRequest:
    return _req(agent, "acp:cap:financial.transfer", resource, ResourceClass.SENSITIVE)


def run_exp4(case: Exp4Case | str = Exp4Case.SEQUENTIAL, serialized: bool = True,
             policy: PolicyConfig | None = None) -> ExperimentReport:
    """Token replay cases.

    CONCURRENT uses 5 workers x 4 requests. With ``serialized`` each
    process() call holds a shared lock, mirroring a backend whose reads are
    serialized; without it only the totals are deterministic.
    """
    case = Exp4Case(case)
    rec = _Recorder(exp4_policy(policy), ETU)
    agent = f"agent-replay-{case.value.lower()}"
    if case is Exp4Case.BASELINE:
        for i in range(10):
            rec.step(low_risk(agent, resource=f"reports/r-{i:03d}"))
    elif case is Exp4Case.SEQUENTIAL:
        for _ in range(10):
            rec.step(_replay(agent))
    elif case is Exp4Case.NEAR_IDENTICAL:
        for i in range(10):
            rec.step(_replay(agent, f"accounts/sensitive-{i:03d}"))
    else:
        gate = threading.Lock()
        tally = threading.Lock()
        results: list[StepOutcome] = []

        def worker() -> None:
            for _ in range(4):
                req = _replay(agent)
                if serialized:
                    with gate:
                        rec.step(req)
                else:
                    outcome = process(req, rec.store, rec.policy, rec.ordering)
                    with tally:
                        results.append(outcome)

        threads = [threading.Thread(target=worker) for _ in range(5)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        for o in results:
            rec.counts[o.result.decision.value] += 1
            rec.trajectory.append((len(rec.outcomes), o.result.decision.value, o.result.rs_final))
            rec.outcomes.append(o)

    got = {k: rec.counts[k] for k in ("ESCALATED", "DENIED", "COOLDOWN_ACTIVE")}
    rs_seq = [t[2] for t in rec.trajectory if t[1] != Decision.COOLDOWN_ACTIVE.value]
    if case is Exp4Case.CONCURRENT and not serialized:
        passed = sum(rec.counts.values()) == 20 and got["COOLDOWN_ACTIVE"] >= 14
    else:
        passed = got == EXP4_EXPECTED[case]
    if case in (Exp4Case.SEQUENTIAL, Exp4Case.CONCURRENT) and serialized:
        passed = passed and rs_seq == EXP4_SEQUENTIAL_RS
    if case is Exp4Case.NEAR_IDENTICAL:
        passed = passed and rs_seq == [55] * 10
    if case is Exp4Case.BASELINE:
        passed = passed and all(not o.result.breakdown.rules_fired for o in rec.outcomes)
    milestones = {}
    first_rule3 = next((i for i, o in enumerate(rec.outcomes)
                        if Rule.RULE3 in o.result.breakdown.rules_fired), None)
    if first_rule3 is not None:
        milestones["first_rule3"] = first_rule3 + 1
    return rec.report("EXP4", milestones=milestones, passed=passed,
                      params={"case": case.value, "serialized": serialized})


def run_exp5(total: int = 500, policy: PolicyConfig | None = None) -> ExperimentReport:
    """Stateless vs stateful admission on one repeated, individually valid request.

    Milestones are 1-based request numbers. The stateless arm evaluates
    the same requests against a NullStore.
    """
    policy = policy or default_policy()
    rec = _Recorder(policy, UTE)
    stateless = _Recorder(policy, UTE, store=NullStore())
    agent = "agent-repeat"
    for _ in range(total):
        req = _req(agent, "acp:cap:financial.transfer", "accounts/payee-001",
                   ResourceClass.PUBLIC)
        rec.step(req)
        stateless.step(req)
    decisions = rec.decisions()
    milestones = {}
    for name, target in (("first_escalated", Decision.ESCALATED),
                         ("first_denied", Decision.DENIED),
                         ("cooldown_from", Decision.COOLDOWN_ACTIVE)):
        idx = _first(decisions, target)
        if idx is not None:
            milestones[name] = idx + 1
    expected_stateful = {"APPROVED": 2, "ESCALATED": 8, "DENIED": 3,
                         "COOLDOWN_ACTIVE": total - 13}
    expected_stateless = {"APPROVED": total, "ESCALATED": 0, "DENIED": 0, "COOLDOWN_ACTIVE": 0}
    passed = (total >= 14 and rec.counts == expected_stateful
              and stateless.counts == expected_stateless
              and milestones == {"first_escalated": 3, "first_denied": 11, "cooldown_from": 14}
              and rec.trajectory[0][2] == 35)
    return rec.report("EXP5", milestones=milestones, passed=passed, params={"total": total},
                      details={"stateless": dict(stateless.counts),
                               "autonomous_rate": f"{rec.counts['APPROVED']}/{total}"})


def _phase2(agent: str) -> EvalRequest:
    return _req(agent, "acp:cap:financial.transfer", "accounts/vendor-payout",
                ResourceClass.SENSITIVE)


def _snapshot(outcome: StepOutcome) -> dict[str, Any]:
    r = outcome.result
    return {"rs": r.rs_final, "decision": r.decision.value, "f_anom": r.breakdown.f_anom,
            "rules_fired": sorted(x.value for x in r.breakdown.rules_fired)}


def contamination_threshold(policy: PolicyConfig, limit: int = 50) -> int | None:
    """Smallest number of priming reads after which the phase-2 request
    picks up Rule 1, evaluating against history that excludes the current
    attempt. None if no priming count up to ``limit`` does it."""
    for primes in range(limit + 1):
        store = InMemoryStore()
        agent = "agent-threshold"
        for i in range(primes):
            process(low_risk(agent), store, policy, ETU)
        outcome = process(_phase2(agent), store, policy, ETU)
        if Rule.RULE1 in outcome.result.breakdown.rules_fired:
            return primes
    return None


def run_exp6(version: EngineVersion | str = EngineVersion.RISK_2_0, primes: int = 11,
             policy: PolicyConfig | None = None) -> ExperimentReport:
    """State mixing: many public reads, then one sensitive transfer on shared state."""
    version = EngineVersion(version)
    policy = (policy or default_policy()).replace(engine_version=version)
    agent = "legitimate-agent-1"
    control = _Recorder(policy, UTE)
    control_outcome = control.step(_phase2(agent))

    rec = _Recorder(policy, UTE)
    for _ in range(primes):
        rec.step(low_risk(agent))
    contaminated = rec.step(_phase2(agent))
    threshold = contamination_threshold(policy)

    details = {"control": _snapshot(control_outcome), "contaminated": _snapshot(contaminated),
               "contamination_threshold": threshold}
    phase1_ok = all(d is Decision.APPROVED for d in rec.decisions()[:-1])
    ok_control = details["control"] == {"rs": 50, "decision": "ESCALATED", "f_anom": 0,
                                        "rules_fired": []}
    if version is EngineVersion.RISK_2_0:
        ok_contaminated = details["contaminated"] == {
            "rs": 70, "decision": "DENIED", "f_anom": 20, "rules_fired": ["RULE1"]}
        ok_threshold = threshold == policy.rule1_threshold_n + 1
    else:
        ok_contaminated = details["contaminated"] == details["control"]
        ok_threshold = threshold is None
    passed = ok_control and phase1_ok and (primes != 11 or (ok_contaminated and ok_threshold))
    return rec.report("EXP6", passed=passed,
                      params={"version": version.value, "primes": primes}, details=details)


EXP7_EXPECTED = {
    (Exp7Scenario.CLEAN, EngineVersion.RISK_2_0): (50, "ESCALATED"),
    (Exp7Scenario.CLEAN, EngineVersion.RISK_3_0): (50, "ESCALATED"),
    (Exp7Scenario.MIXING, EngineVersion.RISK_2_0): (70, "DENIED"),
    (Exp7Scenario.MIXING, EngineVersion.RISK_3_0): (50, "ESCALATED"),
    (Exp7Scenario.SAME_CONTEXT_BURST, EngineVersion.RISK_2_0): (85, "DENIED"),
    (Exp7Scenario.SAME_CONTEXT_BURST, EngineVersion.RISK_3_0): (85, "DENIED"),
}


def run_exp7(scenario: Exp7Scenario | str, version: EngineVersion | str,
             policy: PolicyConfig | None = None) -> ExperimentReport:
    """Context-scoped anomaly enforcement; reports the final request."""
    scenario, version = Exp7Scenario(scenario), EngineVersion(version)
    policy = (policy or default_policy()).replace(engine_version=version)
    rec = _Recorder(policy, UTE)
    agent = "legitimate-agent-1"
    if scenario is Exp7Scenario.MIXING:
        for _ in range(11):
            rec.step(low_risk(agent))
        rec.step(_phase2(agent))
    elif scenario is Exp7Scenario.SAME_CONTEXT_BURST:
        for _ in range(11):
            rec.step(_phase2(agent))
    else:
        rec.step(_phase2(agent))
    final = _snapshot(rec.outcomes[-1])
    passed = (final["rs"], final["decision"]) == EXP7_EXPECTED[(scenario, version)]
    return rec.report("EXP7", passed=passed,
                      params={"scenario": scenario.value, "version": version.value},
                      details={"final": final})


DEFAULT_DELAYS = (0.0, 250e-6, 1e-3, 5e-3)


def _approved_workload(worker: int, n: int) -> list[EvalRequest]:
    # distinct resources keep pattern counts at zero; nothing is recorded anyway
    caps = [("acp:cap:data.read", ResourceClass.PUBLIC), ("acp:cap:data.write", ResourceClass.PUBLIC),
            ("acp:cap:data.write", ResourceClass.SENSITIVE)]
    ts = int(time.time())
    return [_req(f"agent-w{worker:03d}", caps[i % 3][0], f"objects/{worker}-{i}", caps[i % 3][1], ts)
            for i in range(n)]


def _default_requests(delay: float) -> int:
    if delay <= 0:
        return 20_000
    # about two seconds of wall time with ten workers
    return max(200, min(5_000, int(10 * 2.0 / (4 * delay))))


def run_exp3b(delay_per_call: float, workers: int = 10, requests: int | None = None,
              warmup: int = 1_000, policy: PolicyConfig | None = None) -> ExperimentReport:
    """Throughput of evaluate() behind a DelayedStore on the real clock.

    ``requests`` evaluations are timed after ``warmup`` untimed ones, all
    spread over ``workers`` threads. Each evaluation performs four store
    reads; mean per-request latency is reported in milliseconds.
    """
    policy = policy or default_policy()
    store = DelayedStore(InMemoryStore(), delay_per_call)
    requests = requests if requests is not None else _default_requests(delay_per_call)
    counts: Counter[str] = Counter()
    latencies: list[float] = []
    lock = threading.Lock()

    def run_phase(total: int, timed: bool) -> float:
        share = [total // workers + (1 if w < total % workers else 0) for w in range(workers)]
        barrier = threading.Barrier(workers + 1)

        def worker(w: int) -> None:
            reqs = _approved_workload(w, share[w])
            local_lat, local_counts = [], Counter()
            barrier.wait()
            for req in reqs:
                t0 = time.perf_counter()
                result = evaluate(req, store, policy)
                local_lat.append(time.perf_counter() - t0)
                local_counts[result.decision.value] += 1
            if timed:
                with lock:
                    latencies.extend(local_lat)
                    counts.update(local_counts)

        threads = [threading.Thread(target=worker, args=(w,)) for w in range(workers)]
        for t in threads:
            t.start()
        barrier.wait()
        t0 = time.perf_counter()
        for t in threads:
            t.join()
        return time.perf_counter() - t0

    run_phase(warmup, timed=False)
    elapsed = run_phase(requests, timed=True)
    rps = requests / elapsed if elapsed > 0 else float("inf")
    mean_ms = statistics.fmean(latencies) * 1e3
    decision_counts = _zero_counts()
    decision_counts.update(counts)
    expected_ms = 4 * delay_per_call * 1e3
    within = delay_per_call <= 0 or abs(mean_ms - expected_ms) <= 0.3 * expected_ms
    return ExperimentReport(
        "EXP3B", decision_counts, throughput_rps=rps,
        passed=decision_counts["APPROVED"] == requests,
        params={"delay_per_call_s": delay_per_call, "workers": workers, "requests": requests,
                "warmup": warmup},
        metrics={"mean_latency_ms": mean_ms, "expected_latency_ms": expected_ms,
                 "elapsed_s": elapsed},
        details={"latency_within_30pct_of_4x": within},
    )


def run_exp3b_sweep(delays: Iterable[float] = DEFAULT_DELAYS, workers: int = 10,
                    requests: int | None = None, warmup: int = 1_000) -> ExperimentReport:
    """Latency-injection sweep.

    Passes when throughput strictly decreases with the injected delay and
    the mean latency at the largest delay is within 30% of four times it.
    """
    delays = sorted(delays)
    runs = [run_exp3b(d, workers, requests, warmup) for d in delays]
    rps = [r.throughput_rps for r in runs]
    decreasing = all(a > b for a, b in zip(rps, rps[1:]))
    top = runs[-1]
    counts = _zero_counts()
    for r in runs:
        for k, v in r.decision_counts.items():
            counts[k] += v
    metrics = {}
    for d, r in zip(delays, runs):
        tag = f"{d * 1e6:g}us"
        metrics[f"rps_{tag}"] = r.throughput_rps
        metrics[f"mean_latency_ms_{tag}"] = r.metrics["mean_latency_ms"]
    return ExperimentReport(
        "EXP3B", counts, throughput_rps=rps[0], passed=decreasing and
        top.details["latency_within_30pct_of_4x"] and all(r.passed for r in runs),
        params={"delays_s": list(delays), "workers": workers}, metrics=metrics,
        details={"throughput_strictly_decreasing": decreasing},
    )


def measure_fast_path(iterations: int = 20_000, repeats: int = 5,
                      policy: PolicyConfig | None = None) -> dict[str, Any]:
    """Compare the cooldown short-circuit with the full evaluation path.

    Both paths run against the same in-memory store. Returns the store reads
    each path performs and the best-of-``repeats`` mean latency in ns.
    """
    policy = policy or default_policy()
    inner = InMemoryStore()
    blocked = high_risk("agent-blocked")
    full = low_risk("agent-clean")
    # give both agents some history so the full path does real window scans
    for k in range(50):
        inner.add_request(full.agent_id, EPOCH0 - k)
        inner.add_request(blocked.agent_id, EPOCH0 - k)
    inner.set_cooldown(blocked.agent_id, EPOCH0 + 600)

    probe = InstrumentedStore(inner)
    evaluate(blocked, probe, policy)
    reads_blocked = sum(probe.reads().values())
    probe.reset()
    evaluate(full, probe, policy)
    reads_full = sum(probe.reads().values())

    def mean_ns(req: EvalRequest) -> float:
        best = float("inf")
        for _ in range(repeats):
            t0 = time.perf_counter_ns()
            for _ in range(iterations):
                evaluate(req, inner, policy)
            best = min(best, (time.perf_counter_ns() - t0) / iterations)
        return best

    return {"reads_cooldown": reads_blocked, "reads_full": reads_full,
            "cooldown_ns": mean_ns(blocked), "full_ns": mean_ns(full)}


def run_experiment(config: ExperimentConfig) -> list[ExperimentReport]:
    """Run one configured experiment; multi-case experiments yield several reports."""
    p = dict(config.params)
    eid = config.experiment_id
    if eid is ExperimentId.EXP1:
        return [run_exp1(**p)]
    if eid is ExperimentId.EXP2:
        return [run_exp2(**p)]
    if eid is ExperimentId.EXP3B:
        return [run_exp3b_sweep(**p)]
    if eid is ExperimentId.EXP4:
        cases = [p.pop("case")] if "case" in p else list(Exp4Case)
        return [run_exp4(c, **p) for c in cases]
    if eid is ExperimentId.EXP5:
        return [run_exp5(**p)]
    if eid is ExperimentId.EXP6:
        versions = [p.pop("version")] if "version" in p else list(EngineVersion)
        return [run_exp6(v, **p) for v in versions]
    scenarios = [p["scenario"]] if "scenario" in p else list(Exp7Scenario)
    versions = [p["version"]] if "version" in p else list(EngineVersion)
    return [run_exp7(s, v) for s in scenarios for v in versions]


def emit_report(reports: ExperimentReport | Sequence[ExperimentReport], path: str | Path,
                fmt: str = "JSON") -> None:
    """Write reports as JSON (full, trajectory included) or CSV (counts only)."""
    if isinstance(reports, ExperimentReport):
        reports = [reports]
    fmt = fmt.upper()
    if fmt == "JSON":
        data: Any = [r.to_dict() for r in reports]
        Path(path).write_text(json.dumps(data[0] if len(data) == 1 else data, indent=2) + "\n",
                              encoding="utf-8")
    elif fmt == "CSV":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_HEADER)
            for r in reports:
                c = r.decision_counts
                w.writerow([r.experiment_id, c["APPROVED"], c["ESCALATED"], c["DENIED"],
                            c["COOLDOWN_ACTIVE"], "true" if r.passed else "false"])
    else:
        raise ValueError(f"unknown report format {fmt!r}")


def load_reports(path: str | Path) -> list[ExperimentReport]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    items = data if isinstance(data, list) else [data]
    return [ExperimentReport.from_dict(d) for d in items]
