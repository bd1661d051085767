"""Command-line entry point: ``metaopera <command> [options]``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import bench
from .committee import CommitteeError
from .config import SCENARIOS, ConfigError, build_world, default_seed, load_config, transfer_request
from .params import DEFAULT_PARAMS


class UsageError(Exception):
    pass


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def cmd_run_transfer(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    request = transfer_request(cfg, args.scenario)
    world = build_world(cfg)
    trace = world.run_transfer(request)
    _write(args.out, trace.export())
    if not trace.completed:
        print(f"failed: step={trace.failed_step.value} reason={trace.reason}", file=sys.stderr)
        return 1
    return 0


def cmd_sweep(args) -> int:
    if args.min < 1 or args.max < args.min or args.step < 1:
        raise UsageError(f"bad range min={args.min} max={args.max} step={args.step}")
    result = bench.run_proof_sweep(args.min, args.max, args.step, seed=args.seed)
    _write(args.out, result.to_csv())
    return 0


def _model(args, scheme=bench.Scheme.METAOPERA) -> bench.LatencyModel:
    try:
        return bench.LatencyModel(args.k, args.k_prime, args.interval, args.t_proof, scheme)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_latency_table(args) -> int:
    rows = bench.latency_table(_model(args))
    _write(args.out, bench.table_csv(rows))
    return 0


def cmd_experiment(args) -> int:
    if args.n < 1:
        raise UsageError(f"--n must be >= 1, got {args.n}")
    summary = bench.run_latency_experiment(args.n, _model(args), seed=args.seed)
    _write(args.out, summary.runs_csv())
    _write(args.summary, summary.report())
    return 0


def _model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k", type=int, default=DEFAULT_PARAMS.relay_k, help="relay common-prefix depth")
    p.add_argument("--k-prime", type=int, default=DEFAULT_PARAMS.target_k, help="target common-prefix depth")
    p.add_argument("--interval", type=int, default=DEFAULT_PARAMS.block_interval, help="block interval (s)")
    p.add_argument("--t-proof", type=int, default=DEFAULT_PARAMS.t_proof, help="proof generation time (s)")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="metaopera", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run-transfer", help="run one scenario and write its trace")
    p.add_argument("scenario", choices=SCENARIOS)
    p.add_argument("--config", help="scenario YAML (built-in defaults if omitted)")
    p.add_argument("--out", help="trace output path (stdout if omitted)")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_run_transfer)

    p = sub.add_parser("sweep", help="proof size over committee sizes (CSV)")
    p.add_argument("--min", type=int, default=50)
    p.add_argument("--max", type=int, default=1000)
    p.add_argument("--step", type=int, default=50)
    p.add_argument("--out")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("latency-table", help="analytical latency of both schemes (CSV)")
    _model_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_latency_table)

    p = sub.add_parser("experiment", help="simulate DM-to-DM transfers and compare with the model")
    _model_flags(p)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--out", help="per-run CSV")
    p.add_argument("--summary", help="summary output (stdout if omitted)")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "seed", 0) is None and args.func is not cmd_run_transfer:
            args.seed = default_seed()
        return args.func(args)
    except (UsageError, ConfigError, CommitteeError, ValueError) as exc:
        msg = " ".join(str(exc).split())
        print(f"error: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
