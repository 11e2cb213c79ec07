"""Command line front end.

    doublewell minimize <config>
    doublewell evolve <config>
    doublewell verify [--quick | --full] [--threads N]

Exit status: 0 ok, 1 check or scheme failure, 2 config error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .grid import NonFiniteError
from .io import snapshot_name, write_snapshot, write_trace
from .schemes import SchemeError, evolve, minimize_algorithm1
from .verify import format_report, run_checks

EXIT_OK, EXIT_FAILURE, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("doublewell")


def _error(component: str, message: str) -> None:
    print(f"doublewell {component}: {message}", file=sys.stderr)


def run(cfg: RunConfig, mode: str = "evolve") -> int:
    """Execute one configured job, writing ``trace.csv`` and snapshots to ``cfg.output``."""
    out = Path(cfg.output)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        _error("io", f"cannot write to output directory {out}: {exc}")
        return EXIT_IO

    try:
        u0 = cfg.initial_field()
    except ValueError as exc:
        _error("config", str(exc))
        return EXIT_CONFIG

    stride = cfg.snapshot_stride
    last = {"step": None, "u": None}

    def snapshot(step: int, u: np.ndarray) -> None:
        last["step"], last["u"] = step, u
        if stride and step % stride == 0:
            write_snapshot(out / snapshot_name(step), cfg.grid, u)

    try:
        if mode == "minimize":
            u, trace = minimize_algorithm1(cfg.grid, u0, cfg.scheme, snapshot, cfg.wall_time)
        else:
            u, trace = evolve(cfg.grid, u0, cfg.scheme, snapshot, cfg.wall_time)
    except (NonFiniteError, SchemeError, ValueError) as exc:
        _error("schemes", f"{cfg.scheme.scheme}: {exc}")
        return EXIT_FAILURE
    except OSError as exc:
        _error("io", f"writing snapshot: {exc}")
        return EXIT_IO

    try:
        write_trace(out / "trace.csv", trace)
    except OSError as exc:
        _error("io", f"writing trace: {exc}")
        return EXIT_IO

    statuses = [r.inner_status for r in trace.records[1:]]
    unhealthy = sum(s not in ("converged", "degenerate_flat") for s in statuses)
    status = "ok" if not unhealthy else f"{unhealthy} step(s) with unconverged inner solver"
    print(f"{trace.scheme}: final energy {trace.records[-1].energy:.12g}, "
          f"steps {trace.steps_completed}, max|u| {np.max(np.abs(u)):.6g}, status {status}")
    return EXIT_OK


def _job(path: str, mode: str) -> int:
    try:
        cfg = load_config(path)
    except ConfigError as exc:
        _error("config", f"{path}: {exc}")
        return EXIT_CONFIG
    except OSError as exc:
        _error("io", f"cannot read {path}: {exc}")
        return EXIT_IO
    if mode == "minimize" and cfg.scheme.scheme != "algorithm1":
        _error("config", f"{path}: minimize runs algorithm1, config has scheme = {cfg.scheme.scheme}")
        return EXIT_CONFIG
    return run(cfg, mode)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="doublewell",
        description="Energy-stable minimization and Allen-Cahn time stepping for the double-well energy.",
    )
    parser.add_argument("--threads", type=int, default=1, metavar="N",
                        help="worker threads for independent verify checks (default 1)")
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver details")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("minimize", help="run the iterative convex minimization (scheme = algorithm1)")
    p.add_argument("config")
    p = sub.add_parser("evolve", help="time-step the Allen-Cahn equation with the configured scheme")
    p.add_argument("config")
    p = sub.add_parser("verify", help="run the energy-stability certificates")
    level = p.add_mutually_exclusive_group()
    level.add_argument("--quick", dest="level", action="store_const", const="quick")
    level.add_argument("--full", dest="level", action="store_const", const="full")
    p.set_defaults(level="quick")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        _error("cli", "--threads must be >= 1")
        return EXIT_CONFIG
    if args.command == "verify":
        results = run_checks(args.level, threads=args.threads)
        print(format_report(results))
        return EXIT_OK if all(r.passed for r in results) else EXIT_FAILURE
    return _job(args.config, args.command)


if __name__ == "__main__":
    sys.exit(main())
