"""Command-line entry point.

Exit codes: 0 on success, 1 when a run completes but fails its checks,
2 for usage and input errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Sequence

from .conformance import VectorLoadError, bundled_suite_path, load_suite, run_suite
from .execution import UpdateOrdering
from .experiments import (
    ClockMode,
    ExperimentConfig,
    ExperimentId,
    emit_report,
    run_experiment,
)
from .ledger import LedgerError, read_ndjson, verify_chain
from .policy import EngineVersion, PolicyError, load_policy

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _err(msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return EXIT_USAGE


def _load_policy_arg(path: str | None):
    from .service import policy_from_env

    return policy_from_env(path)


def cmd_run_vectors(args: argparse.Namespace) -> int:
    path = bundled_suite_path() if args.path == "bundled" else args.path
    try:
        vectors = load_suite(path)
        policy = _load_policy_arg(args.policy)
        reports = run_suite(vectors, policy, strict=args.strict)
    except (VectorLoadError, PolicyError, OSError) as exc:
        return _err(str(exc))
    for rep in reports:
        print(f"{rep.vector_id}: {rep.overall}")
        for s in rep.steps:
            if not s.passed:
                print(f"  step {s.index}: expected {s.expected_decision}/{s.expected_rs}, "
                      f"got {s.actual_decision}/{s.actual_rs}")
    passed = sum(r.passed for r in reports)
    print(f"{passed}/{len(reports)} {'PASS' if passed == len(reports) else 'FAIL'}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump([r.to_dict() for r in reports], fh, indent=2)
    return EXIT_OK if passed == len(reports) else EXIT_FAIL


def _experiment_params(args: argparse.Namespace) -> dict:
    names = {
        "total": args.total, "agents": args.agents, "per_agent": args.per_agent,
        "case": args.case, "version": args.version, "scenario": args.scenario,
        "primes": args.primes, "workers": args.workers, "requests": args.requests,
        "warmup": args.warmup,
    }
    params = {k: v for k, v in names.items() if v is not None}
    if args.delays:
        params["delays"] = [float(d) for d in args.delays.split(",")]
    if args.parallel:
        params["serialized"] = False
    return params


def cmd_run_experiment(args: argparse.Namespace) -> int:
    eid = ExperimentId(args.experiment_id.upper())
    clock = ClockMode.REAL if eid is ExperimentId.EXP3B else ClockMode.FIXED
    try:
        config = ExperimentConfig(eid, _experiment_params(args), clock)
        reports = run_experiment(config)
    except ValueError as exc:
        return _err(str(exc))
    for r in reports:
        print(r.summary())
        if r.milestones:
            print("  milestones: " + ", ".join(f"{k}={v}" for k, v in r.milestones.items()))
    if args.out:
        emit_report(reports, args.out, args.format)
    return EXIT_OK if all(r.passed for r in reports) else EXIT_FAIL


def cmd_verify_ledger(args: argparse.Namespace) -> int:
    try:
        events = read_ndjson(args.file)
    except (LedgerError, OSError) as exc:
        return _err(str(exc))
    key = None
    if args.public_key:
        from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PublicKey
        from .ledger import b64url_decode

        try:
            key = Ed25519PublicKey.from_public_bytes(b64url_decode(args.public_key))
        except ValueError as exc:
            return _err(f"bad public key: {exc}")
    verdict = verify_chain(events, key=key, expected_head=args.head)
    if verdict:
        print(f"ok: {len(events)} events verified")
        return EXIT_OK
    print(f"broken_at={verdict.broken_at}: {verdict.reason}")
    return EXIT_FAIL


def cmd_hash_policy(args: argparse.Namespace) -> int:
    try:
        policy = load_policy(args.file)
    except (PolicyError, OSError) as exc:
        return _err(str(exc))
    print(policy.policy_hash)
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import AdmissionService, create_app

    try:
        policy = _load_policy_arg(args.policy)
        svc = AdmissionService(policy=policy, ordering=UpdateOrdering(args.ordering),
                               ledger_path=args.ledger)
    except (PolicyError, LedgerError, OSError) as exc:
        return _err(str(exc))
    uvicorn.run(create_app(svc), host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="acp-admission",
                                     description="Stateful risk-based admission control.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run-vectors", help="run sequence conformance vectors")
    p.add_argument("path", help="vector file or directory, or 'bundled'")
    p.add_argument("--strict", action="store_true", help="stop a vector at its first mismatch")
    p.add_argument("--policy", help="policy JSON file (default: $ACP_POLICY_FILE or built-in)")
    p.add_argument("--out", help="write a JSON run report here")
    p.set_defaults(func=cmd_run_vectors)

    p = sub.add_parser("run-experiment", help="run one experiment")
    p.add_argument("experiment_id", choices=[e.value for e in ExperimentId],
                   type=str.upper)
    p.add_argument("--total", type=int)
    p.add_argument("--agents", type=int)
    p.add_argument("--per-agent", type=int)
    p.add_argument("--case", choices=["BASELINE", "SEQUENTIAL", "CONCURRENT", "NEAR_IDENTICAL"])
    p.add_argument("--parallel", action="store_true",
                   help="EXP4 CONCURRENT without the serializing lock")
    p.add_argument("--version", choices=[v.value for v in EngineVersion])
    p.add_argument("--scenario", choices=["CLEAN", "MIXING", "SAME_CONTEXT_BURST"])
    p.add_argument("--primes", type=int)
    p.add_argument("--delays", help="comma-separated per-call delays in seconds (EXP3B)")
    p.add_argument("--workers", type=int)
    p.add_argument("--requests", type=int)
    p.add_argument("--warmup", type=int)
    p.add_argument("--out", help="write the report here")
    p.add_argument("--format", choices=["JSON", "CSV"], default="JSON", type=str.upper)
    p.set_defaults(func=cmd_run_experiment)

    p = sub.add_parser("verify-ledger", help="verify an NDJSON ledger file")
    p.add_argument("file")
    p.add_argument("--public-key", help="base64url Ed25519 public key, passed as --public-key=KEY; checks signatures")
    p.add_argument("--head", help="expected hash of the last event")
    p.set_defaults(func=cmd_verify_ledger)

    p = sub.add_parser("serve", help="run the HTTP admission service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--policy", help="policy JSON file (default: $ACP_POLICY_FILE or built-in)")
    p.add_argument("--ordering", choices=[o.value for o in UpdateOrdering],
                   default=UpdateOrdering.EVALUATE_THEN_UPDATE.value)
    p.add_argument("--ledger", help="NDJSON file to persist the ledger to")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("hash-policy", help="print the hash of a policy file")
    p.add_argument("file")
    p.set_defaults(func=cmd_hash_policy)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
