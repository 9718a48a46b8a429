"""Convergence studies, reference solutions and snapshot series."""
from __future__ import annotations

from dataclasses import dataclass, field
import hashlib
import json
import logging
import math
import os
from pathlib import Path
import tempfile
import time
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .lowrank import lowrank_integrate, truncate_state
from .model import (
    PRESETS,
    GridSpec,
    ModelParams,
    NonlinearPair,
    ProblemPreset,
    TimeGrid,
    sample_initial,
)
from .splitting import BlowUpError, integrate_fullrank

__all__ = [
    "ConvergenceCell",
    "ExperimentConfig",
    "SnapshotSeries",
    "relerr",
    "observed_rate",
    "reference_steps",
    "reference_key",
    "reference_solution",
    "convergence_table",
    "snapshot_series",
    "default_cache_dir",
]

log = logging.getLogger(__name__)

CACHE_ENV = "DLRWAVE_CACHE"
DEFAULT_CACHE_DIR = ".dlrwave-cache"


@dataclass(frozen=True)
class ConvergenceCell:
    rank: int
    M: int
    tau: float
    relerr: float
    rate: Optional[float] = None
    status: str = "ok"
    seconds: float = field(default=0.0, compare=False)

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to rerun one study."""

    preset: ProblemPreset
    grid: GridSpec
    T: float
    M_list: tuple[int, ...]
    ranks: tuple[int, ...]
    params: ModelParams
    nonlinear: NonlinearPair
    multiplier: int = 16
    fn_substeps: int = 1
    snapshot_times: tuple[float, ...] = (0.0, 1.0, 2.0, 3.0)
    pgm_range: str = "series"

    def __post_init__(self):
        object.__setattr__(self, "M_list", tuple(int(M) for M in self.M_list))
        object.__setattr__(self, "ranks", tuple(int(r) for r in self.ranks))
        object.__setattr__(self, "snapshot_times", tuple(float(t) for t in self.snapshot_times))
        if not self.M_list or any(M < 1 for M in self.M_list):
            raise ValueError("M_list must hold positive step counts")
        if any(b <= a for a, b in zip(self.M_list, self.M_list[1:])):
            raise ValueError("M_list must be strictly increasing")
        if not self.ranks or any(r < 1 for r in self.ranks):
            raise ValueError("ranks must be positive")
        if max(self.ranks) > min(self.grid.shape):
            raise ValueError(f"rank {max(self.ranks)} exceeds interior size {min(self.grid.shape)}")
        if not self.T > 0:
            raise ValueError("final time T must be positive")
        if self.multiplier < 1:
            raise ValueError("reference multiplier must be at least 1")
        if self.fn_substeps < 1:
            raise ValueError("fn_substeps must be at least 1")
        if self.pgm_range not in ("series", "frame"):
            raise ValueError("pgm range policy must be 'series' or 'frame'")

    def time_grid(self, M: int) -> TimeGrid:
        return TimeGrid(self.T, M)


def relerr(approx, reference) -> float:
    """Relative Frobenius error ``||approx - reference|| / ||reference||``."""
    approx = np.asarray(approx, dtype=float)
    reference = np.asarray(reference, dtype=float)
    if approx.shape != reference.shape:
        raise ValueError(f"shape mismatch {approx.shape} vs {reference.shape}")
    denom = np.linalg.norm(reference)
    if denom == 0:
        raise ZeroDivisionError("reference has zero norm")
    return float(np.linalg.norm(approx - reference) / denom)


def observed_rate(e1: float, e2: float, tau1: float, tau2: float) -> float:
    """Convergence order ``log(e1/e2) / log(tau1/tau2)``."""
    if min(e1, e2, tau1, tau2) <= 0:
        raise ValueError("errors and step sizes must be positive")
    if tau1 == tau2:
        raise ValueError("step sizes must differ")
    return math.log(e1 / e2) / math.log(tau1 / tau2)


def reference_steps(config: ExperimentConfig) -> int:
    return config.multiplier * max(config.M_list)


def reference_key(config: ExperimentConfig) -> Optional[str]:
    """Content hash identifying the reference run, or None for custom data."""
    if PRESETS.get(config.preset.name) is not config.preset:
        return None
    if "custom" in (config.nonlinear.f_name, config.nonlinear.g_name):
        return None
    g, p = config.grid, config.params
    payload = {
        "preset": config.preset.name,
        "grid": [g.x_L, g.x_R, g.y_L, g.y_R, g.N_x, g.N_y],
        "params": [p.alpha, p.beta, p.gamma, p.delta, list(p.omega)],
        "nonlinear": [config.nonlinear.f_name, config.nonlinear.g_name],
        "T": config.T,
        "M_ref": reference_steps(config),
        "fn_substeps": config.fn_substeps,
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def default_cache_dir() -> Path:
    return Path(os.environ.get(CACHE_ENV, DEFAULT_CACHE_DIR))


def _atomic_save(path: Path, array: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            np.save(fh, array, allow_pickle=False)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def reference_solution(
    config: ExperimentConfig, cache_dir: Optional[os.PathLike] = None, use_cache: bool = True
) -> np.ndarray:
    """Displacement at ``T`` from a fine full-rank run.

    The run uses ``multiplier * max(M_list)`` steps. Results for registry
    presets are cached as ``ref-<sha256>.npy`` under `cache_dir` (default
    ``$DLRWAVE_CACHE`` or ``.dlrwave-cache``); unreadable entries are
    recomputed.
    """
    key = reference_key(config) if use_cache else None
    path = None
    if key is not None:
        path = Path(cache_dir) if cache_dir is not None else default_cache_dir()
        path = path / f"ref-{key}.npy"
        if path.exists():
            try:
                cached = np.load(path, allow_pickle=False)
                if cached.shape == config.grid.shape and np.isfinite(cached).all():
                    log.debug("reference cache hit %s", path)
                    return cached
            except (OSError, ValueError, EOFError):
                pass
            log.warning("discarding unreadable reference cache entry %s", path)

    M_ref = reference_steps(config)
    start = time.perf_counter()
    state0 = sample_initial(config.grid, config.preset)
    final = integrate_fullrank(
        state0, config.grid, config.time_grid(M_ref), config.params, config.nonlinear,
        substeps=config.fn_substeps,
    )
    log.info("reference M=%d computed in %.2fs", M_ref, time.perf_counter() - start)
    if path is not None:
        _atomic_save(path, final.P)
    return final.P


def convergence_table(
    config: ExperimentConfig, reference: Optional[np.ndarray] = None, **cache_kw
) -> list[ConvergenceCell]:
    """Low-rank errors against the reference for every (rank, M) pair.

    Cells that blow up get ``relerr = nan`` and ``status = "blowup"`` while
    the rest of the table is still computed.
    """
    if reference is None:
        reference = reference_solution(config, **cache_kw)
    state0 = sample_initial(config.grid, config.preset)
    cells = []
    for r in sorted(config.ranks):
        prev = None
        for M in config.M_list:
            grid_t = config.time_grid(M)
            start = time.perf_counter()
            try:
                out = lowrank_integrate(
                    truncate_state(state0, r), config.grid, grid_t, config.params,
                    config.nonlinear, substeps=config.fn_substeps,
                )
            except BlowUpError as exc:
                log.warning("rank %d, M %d blew up at step %d", r, M, exc.step)
                cells.append(ConvergenceCell(r, M, grid_t.tau, math.nan, None, "blowup",
                                             time.perf_counter() - start))
                prev = None
                continue
            err = relerr(out.P.dense(), reference)
            rate = None
            if prev is not None and prev.ok and err > 0 and prev.relerr > 0:
                rate = observed_rate(prev.relerr, err, prev.tau, grid_t.tau)
            cell = ConvergenceCell(r, M, grid_t.tau, err, rate, "ok", time.perf_counter() - start)
            log.info("rank %d, M %d: relerr %.4e, rate %s, %.2fs", r, M, err,
                     "--" if rate is None else f"{rate:.4f}", cell.seconds)
            cells.append(cell)
            prev = cell
    return cells


class SnapshotSeries(NamedTuple):
    times: tuple[float, ...]
    fullrank: list[np.ndarray]
    lowrank: list[np.ndarray]


def snapshot_series(
    config: ExperimentConfig, times: Optional[Sequence[float]] = None
) -> SnapshotSeries:
    """Displacement snapshots of the full-rank and low-rank runs.

    Uses the first entry of ``M_list`` and of ``ranks``; every requested time
    must be a multiple of the step size.
    """
    times = tuple(config.snapshot_times if times is None else times)
    grid_t = config.time_grid(config.M_list[0])
    wanted = {grid_t.index_of(t): i for i, t in enumerate(times)}
    state0 = sample_initial(config.grid, config.preset)

    full = [None] * len(times)
    low = [None] * len(times)

    def grab_full(k, t, state):
        if k in wanted:
            full[wanted[k]] = state.P.copy()

    def grab_low(k, t, pair):
        if k in wanted:
            low[wanted[k]] = pair.P.dense()

    last = max(wanted)
    if last == 0:
        low0 = truncate_state(state0, config.ranks[0]).P.dense()
        return SnapshotSeries(times, [state0.P.copy() for _ in times], [low0.copy() for _ in times])
    sub = TimeGrid(grid_t.t(last), last)
    integrate_fullrank(state0, config.grid, sub, config.params, config.nonlinear,
                       substeps=config.fn_substeps, observer=grab_full)
    lowrank_integrate(truncate_state(state0, config.ranks[0]), config.grid, sub, config.params,
                      config.nonlinear, substeps=config.fn_substeps, observer=grab_low)
    return SnapshotSeries(times, full, low)
