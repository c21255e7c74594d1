"""Command-line entry points: run, sweep, verify.

Exit status is 0 only when all rounds completed and every post-run
invariant check passed. Log verbosity comes from the TASKFED_LOG_LEVEL
environment variable (DEBUG/INFO/WARNING/ERROR).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from . import harness
from .errors import TaskfedError
from .netsim import SCHEMES

log = logging.getLogger("taskfed")


def _setup_logging() -> None:
    level_name = os.environ.get("TASKFED_LOG_LEVEL", "WARNING").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="taskfed",
        description="Deterministic simulator for decentralized federated multi-task learning.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment and write CSV/JSON/transcript")
    p_run.add_argument("--config", required=True, help="path to a YAML experiment config")
    p_run.add_argument("--scheme", choices=SCHEMES, help="override the configured scheme")
    p_run.add_argument("--seed", type=int, help="override the configured seed")
    p_run.add_argument("--out", help="override the configured output directory")

    p_sweep = sub.add_parser("sweep", help="run every scheme on the same config and seed")
    p_sweep.add_argument("--config", required=True, help="path to a YAML experiment config")
    p_sweep.add_argument(
        "--schemes",
        default="all",
        help='"all" or a comma-separated subset of: ' + ", ".join(SCHEMES),
    )
    p_sweep.add_argument("--seed", type=int, help="override the configured seed")
    p_sweep.add_argument("--out", help="override the configured output directory")

    p_verify = sub.add_parser("verify", help="run the invariant suite on a config")
    p_verify.add_argument("--config", required=True, help="path to a YAML experiment config")
    return parser


def _cmd_run(args) -> int:
    config = harness.with_overrides(
        harness.load_config(args.config), scheme=args.scheme, seed=args.seed, out=args.out
    )
    log.info("running scheme=%s seed=%d rounds=%d", config.scheme, config.seed, config.rounds)
    result = harness.run_experiment(config)
    print(f"wrote {result.csv_path}")
    print(f"wrote {result.summary_path}")
    print(f"wrote {result.transcript_path}")
    summary = result.summary
    print(
        f"scheme={summary['scheme']} final_mean_train_loss="
        f"{summary['final_mean_train_loss']:.6g} gamma_hat={summary['gamma_hat']}"
    )
    if summary["invariant_violations"]:
        for v in summary["invariant_violations"]:
            print(f"invariant violation: {v}", file=sys.stderr)
        return 1
    return 0


def _cmd_sweep(args) -> int:
    config = harness.with_overrides(
        harness.load_config(args.config), seed=args.seed, out=args.out
    )
    if args.schemes == "all":
        schemes = list(SCHEMES)
    else:
        schemes = [s.strip() for s in args.schemes.split(",") if s.strip()]
        bad = [s for s in schemes if s not in SCHEMES]
        if bad:
            raise TaskfedError("bad-scheme", f"unknown schemes {bad}")
        if not schemes:
            raise TaskfedError("bad-scheme", "no schemes given")
    status = 0
    for scheme in schemes:
        result = harness.run_experiment(harness.with_overrides(config, scheme=scheme))
        summary = result.summary
        print(
            f"{scheme}: rows={len(result.metrics)} "
            f"final_mean_train_loss={summary['final_mean_train_loss']:.6g} "
            f"gamma_hat={summary['gamma_hat']} -> {result.csv_path}"
        )
        if summary["invariant_violations"]:
            for v in summary["invariant_violations"]:
                print(f"invariant violation ({scheme}): {v}", file=sys.stderr)
            status = 1
    return status


def _cmd_verify(args) -> int:
    config = harness.load_config(args.config)
    checks: list[tuple[str, bool, str]] = []

    first = harness.run_experiment(config, write=False)
    second = harness.run_experiment(config, write=False)
    expected_rows = config.rounds * sum(config.group_sizes)
    checks.append(
        (
            "rounds completed",
            len(first.metrics) == expected_rows,
            f"{len(first.metrics)}/{expected_rows} metric rows",
        )
    )
    checks.append(
        (
            "deterministic replay",
            harness.render_csv(first.metrics) == harness.render_csv(second.metrics)
            and first.summary["transcript_sha256"] == second.summary["transcript_sha256"],
            "CSV bytes and transcript hash match across two runs",
        )
    )
    checks.append(
        (
            "protocol invariants",
            not first.federation.violations,
            "; ".join(first.federation.violations) or "consensus and leader checks clean",
        )
    )
    payload_ok = True
    detail = "all payload vectors have backbone dimension"
    for m in first.federation.message_log:
        payload = m.payload
        dim = None
        if hasattr(payload, "dim"):
            dim = payload.dim
        elif hasattr(payload, "delta"):
            dim = payload.delta.dim
        if dim is not None and dim != config.split_spec:
            payload_ok = False
            detail = f"message {m.kind} from {m.sender} carries dim {dim} != {config.split_spec}"
            break
    checks.append(("head privacy", payload_ok, detail))
    steps_ok = all(
        n.steps_taken == config.rounds * config.local_epochs
        for n in first.federation.nodes.values()
    )
    checks.append(
        (
            "training schedule",
            steps_ok,
            f"every node performed rounds*epochs = {config.rounds * config.local_epochs} steps",
        )
    )
    phis = [m.phi for m in first.metrics if m.phi is not None]
    checks.append(
        (
            "optimality gap sign",
            all(p >= -1e-9 for p in phis),
            f"{len(phis)} gap values >= -1e-9" if phis else "gap undefined for this scenario",
        )
    )

    failed = False
    for name, ok, detail in checks:
        print(f"{'PASS' if ok else 'FAIL'}: {name} ({detail})")
        if not ok:
            failed = True
    return 1 if failed else 0


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "sweep":
            return _cmd_sweep(args)
        return _cmd_verify(args)
    except TaskfedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
