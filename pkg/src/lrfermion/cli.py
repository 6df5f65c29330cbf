"""Command-line entry point: ``lrfermion <job-kind> [--config FILE] [...]``.

Exit status is 0 when every rule of the job passes, 1 on a numerical
failure or a failed rule, and 2 on a usage or configuration error.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .config import JOB_KINDS, ConfigError, default_config, load_config
from .jobs import run_job
from .report import emit_results, emit_timing

OUT_ENV = "LRFERMION_OUT"
DEFAULT_OUT = "results"

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


JOB_HELP = {
    "verify-lr": "check measured propagator blocks against the Lieb-Robinson envelope",
    "clustering": "covariance and Green's-function decay on the gapped reference chain",
    "bound-state": "impurity bound state, residual and tail slope",
    "gap-scan": "gap certificate along the topological interpolation path",
    "fig2": "covariance decay slopes along the interpolation path",
    "filter-check": "filter Fourier identities, monotonicity and sign reconstruction",
    "lemma-suite": "randomized trials of the coarse-graining and Hoelder inequalities",
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lrfermion", description="Run a reproducible numerical job and write CSV/JSON results.")
    sub = parser.add_subparsers(dest="kind", metavar="JOB", parser_class=_Parser)
    sub.required = True
    for kind in JOB_KINDS:
        p = sub.add_parser(kind, help=JOB_HELP[kind])
        p.add_argument("--config", type=Path, help="INI config file; defaults are used when omitted")
        p.add_argument("--out", type=Path, help=f"output directory (overrides ${OUT_ENV} and the config)")
        p.add_argument("--seed", type=int, help="seed for every randomized choice (overrides the config)")
        p.add_argument("--threads", type=int, default=1, help="worker cap for parallel maps (default 1)")
        p.add_argument("--tolerance-scale", type=float, default=1.0, help="multiply every tolerance by this factor")
    return parser


def resolve_out(cli_out: Path | None, config_out: str | None) -> Path:
    """--out, then the environment override, then the config, then ./results."""
    if cli_out is not None:
        return cli_out
    env = os.environ.get(OUT_ENV)
    if env:
        return Path(env)
    return Path(config_out) if config_out else Path(DEFAULT_OUT)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, kind=args.kind) if args.config else default_config(args.kind)
        if args.seed is not None:
            cfg.seed = args.seed
        report = run_job(cfg, threads=args.threads, tolerance_scale=args.tolerance_scale)
    except ConfigError as exc:
        print(f"lrfermion: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    out = resolve_out(args.out, cfg.out)
    try:
        written = emit_results(report, out, "json") + emit_results(report, out, "csv")
        written.append(emit_timing(report, out))
    except OSError as exc:
        print(f"lrfermion: {exc}", file=sys.stderr)
        return EXIT_USAGE

    status = "PASS" if report.passed else "FAIL"
    print(f"{report.kind} [{report.job_id}] {status} ({report.wall_time:.2f} s)")
    for rule in report.rules:
        print(f"  {'ok  ' if rule.passed else 'FAIL'} {rule.name} = {rule.value:.6g} ({rule.op} {rule.threshold})")
    if report.reason:
        print(f"  reason: {report.reason}", file=sys.stderr)
    for path in written:
        print(f"  wrote {path}")
    return EXIT_PASS if report.passed else EXIT_FAIL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
