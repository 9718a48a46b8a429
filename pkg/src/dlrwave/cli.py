"""Command-line front end.

    dlrwave converge --config cfg.json [--set key=value]... [--out DIR]
    dlrwave simulate --config cfg.json ...
    dlrwave snapshot --config cfg.json ...

Exit status: 0 on success, 1 on configuration errors, 2 on numerical
blow-up. Failures also print one JSON object on stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
from pathlib import Path
import sys
import time
from typing import Optional, Sequence

import numpy as np

from .config import ConfigError, parse_config
from .harness import (
    ExperimentConfig,
    convergence_table,
    relerr,
    snapshot_series,
)
from .lowrank import lowrank_integrate, truncate_state
from .model import sample_initial
from .output import format_sci, series_range, write_csv, write_matrix_csv, write_pgm
from .splitting import BlowUpError

log = logging.getLogger("dlrwave")

EXIT_OK, EXIT_CONFIG, EXIT_BLOWUP = 0, 1, 2


def _report(kind: str, message: str, **extra) -> None:
    print(json.dumps({"error": kind, "message": message, **extra}, sort_keys=True), file=sys.stderr)


def cmd_converge(cfg: ExperimentConfig, out: Path) -> int:
    cells = convergence_table(cfg)
    path = out / f"{cfg.preset.name}_convergence.csv"
    write_csv(cells, path)
    for c in cells:
        rate = "--" if c.rate is None else f"{c.rate:.4f}"
        print(f"r={c.rank:<4d} M={c.M:<6d} relerr={format_sci(c.relerr):<14s} rate={rate:<8s} {c.status}")
    print(f"wrote {path}")
    failed = [c for c in cells if not c.ok]
    if failed:
        _report("blowup", f"{len(failed)} cell(s) blew up", cells=[[c.rank, c.M] for c in failed])
        return EXIT_BLOWUP
    return EXIT_OK


def cmd_simulate(cfg: ExperimentConfig, out: Path) -> int:
    M, r = cfg.M_list[-1], cfg.ranks[0]
    start = time.perf_counter()
    state0 = sample_initial(cfg.grid, cfg.preset)
    pair = lowrank_integrate(
        truncate_state(state0, r), cfg.grid, cfg.time_grid(M), cfg.params, cfg.nonlinear,
        substeps=cfg.fn_substeps,
    )
    log.info("simulate finished in %.2fs", time.perf_counter() - start)
    P = pair.P.dense()
    path = out / f"{cfg.preset.name}_P_M{M}_r{r}.csv"
    write_matrix_csv(P, path)
    print(
        f"preset={cfg.preset.name} N={cfg.grid.N_x} T={cfg.T:g} M={M} r={r} "
        f"max_abs_P={format_sci(float(np.abs(P).max()))} fro_P={format_sci(float(np.linalg.norm(P)))}"
    )
    print(f"wrote {path}")
    return EXIT_OK


def cmd_snapshot(cfg: ExperimentConfig, out: Path) -> int:
    series = snapshot_series(cfg)
    frames = {"fullrank": series.fullrank, "lowrank": series.lowrank}
    shared = series_range(series.fullrank + series.lowrank) if cfg.pgm_range == "series" else None
    for method, fields in frames.items():
        for t, field in zip(series.times, fields):
            write_pgm(field, out / f"{cfg.preset.name}_{method}_{t:g}.pgm", shared)
    for t, full, low in zip(series.times, series.fullrank, series.lowrank):
        diff = relerr(low, full) if np.any(full) else float(np.linalg.norm(low))
        print(
            f"t={t:g} max_abs_full={format_sci(float(np.abs(full).max()))} "
            f"max_abs_low={format_sci(float(np.abs(low).max()))} rel_diff={format_sci(diff)}"
        )
    print(f"wrote {2 * len(series.times)} PGM files to {out}")
    return EXIT_OK


COMMANDS = {"converge": cmd_converge, "simulate": cmd_simulate, "snapshot": cmd_snapshot}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dlrwave",
        description="Low-rank Strang splitting for the strongly damped wave equation.",
    )
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="JSON experiment configuration")
    parser.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
        help="override a config entry, e.g. grid.N=64 (repeatable)",
    )
    parser.add_argument("--out", default=".", help="output directory (default: .)")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = parse_config(args.config, args.overrides)
    except ConfigError as exc:
        _report("config", str(exc))
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](cfg, Path(args.out))
    except BlowUpError as exc:
        _report("blowup", str(exc), step=exc.step)
        return EXIT_BLOWUP


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
