import dataclasses
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from _oracles import make_config
from dlrwave.harness import (
    ConvergenceCell,
    convergence_table,
    observed_rate,
    reference_key,
    reference_solution,
    reference_steps,
    relerr,
    snapshot_series,
)
from dlrwave.model import GridSpec, ModelParams, NonlinearPair, ProblemPreset, TimeGrid, sample_initial
from dlrwave.output import write_csv
from dlrwave.splitting import integrate_fullrank

finite = st.floats(-1e3, 1e3, allow_nan=False, width=64)


# -- metrics ----------------------------------------------------------------

def test_relerr_examples():
    X = np.array([[1.0, -2.0], [0.5, 3.0]])
    assert relerr(X, X) == 0.0
    assert relerr(2 * X, X) == pytest.approx(1.0, abs=1e-15)
    assert relerr([[1.0, 0.0]], [[0.0, 1.0]]) == pytest.approx(math.sqrt(2), abs=1e-15)


def test_relerr_errors():
    with pytest.raises(ZeroDivisionError):
        relerr(np.ones((2, 2)), np.zeros((2, 2)))
    with pytest.raises(ValueError):
        relerr(np.ones((2, 2)), np.ones((2, 3)))


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (4, 3), elements=finite), arrays(np.float64, (4, 3), elements=finite),
       st.floats(-1e3, 1e3).filter(lambda c: abs(c) > 1e-3))
def test_relerr_scale_covariant(A, B, c):
    assume(np.linalg.norm(B) > 1e-6)
    assert relerr(c * A, c * B) == pytest.approx(relerr(A, B), rel=1e-12, abs=1e-14)


def test_observed_rate_examples():
    assert observed_rate(1e-3, 1e-3, 0.01, 0.005) == 0.0
    assert observed_rate(8.4712e-5, 2.1922e-5, 0.005, 0.0025) == pytest.approx(1.9502, abs=5e-5)
    assert observed_rate(4e-4, 1e-4, 0.2, 0.1) == pytest.approx(2.0, abs=1e-14)


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-12, 1.0), st.floats(1e-12, 1.0), st.floats(1e-6, 1.0), st.floats(1e-6, 1.0))
def test_observed_rate_antisymmetric(e1, e2, t1, t2):
    assume(abs(math.log(t1 / t2)) > 1e-6)
    assert observed_rate(e1, e2, t1, t2) == pytest.approx(observed_rate(e2, e1, t2, t1), rel=1e-12, abs=1e-12)


def test_observed_rate_rejects_bad_input():
    with pytest.raises(ValueError):
        observed_rate(0.0, 1.0, 0.1, 0.05)
    with pytest.raises(ValueError):
        observed_rate(1.0, 1.0, 0.1, 0.1)


# -- configuration ----------------------------------------------------------

def test_config_validation():
    with pytest.raises(ValueError):
        make_config(M_list=(40, 20))
    with pytest.raises(ValueError):
        make_config(ranks=(0,))
    with pytest.raises(ValueError):
        make_config(N=8, ranks=(8,))
    with pytest.raises(ValueError):
        make_config(pgm_range="auto")


# -- reference --------------------------------------------------------------

def test_reference_steps():
    assert reference_steps(make_config(M_list=(20, 40, 80, 160, 320))) == 5120
    assert reference_steps(make_config(M_list=(10,), multiplier=3)) == 30


def test_reference_matches_direct_run(tmp_path):
    cfg = make_config(N=16, M_list=(10,), multiplier=4)
    ref = reference_solution(cfg, cache_dir=tmp_path)
    direct = integrate_fullrank(sample_initial(cfg.grid, cfg.preset), cfg.grid, TimeGrid(cfg.T, 40),
                                cfg.params, cfg.nonlinear)
    assert ref.tobytes() == direct.P.tobytes()


def test_reference_cache_round_trip(tmp_path):
    cfg = make_config(N=16, M_list=(10,), multiplier=4)
    first = reference_solution(cfg, cache_dir=tmp_path)
    files = list(tmp_path.glob("ref-*.npy"))
    assert len(files) == 1 and files[0].name == f"ref-{reference_key(cfg)}.npy"
    stamp = files[0].stat().st_mtime_ns
    second = reference_solution(cfg, cache_dir=tmp_path)
    assert second.tobytes() == first.tobytes()
    assert files[0].stat().st_mtime_ns == stamp


def test_reference_corrupt_cache_is_recomputed(tmp_path):
    cfg = make_config(N=16, M_list=(10,), multiplier=4)
    good = reference_solution(cfg, cache_dir=tmp_path)
    path = tmp_path / f"ref-{reference_key(cfg)}.npy"
    path.write_bytes(b"not an array")
    assert reference_solution(cfg, cache_dir=tmp_path).tobytes() == good.tobytes()
    assert np.load(path).tobytes() == good.tobytes()


def test_reference_key_is_content_addressed():
    base = make_config()
    variants = [
        make_config(N=33),
        make_config(params=dataclasses.replace(base.params, alpha=1.5)),
        make_config(params=dataclasses.replace(base.params, omega=(0.9, 0.05, 0.05))),
        make_config(preset="example2"),
        make_config(multiplier=8),
        make_config(nonlinear=NonlinearPair.named("cube", "sin")),
        make_config(T=0.2),
        make_config(M_list=(20, 80)),
    ]
    keys = {reference_key(base)} | {reference_key(v) for v in variants}
    assert len(keys) == len(variants) + 1
    # ranks and the M values below the maximum do not affect the reference
    assert reference_key(make_config(ranks=(3, 7), M_list=(10, 40))) == reference_key(base)


def test_custom_data_is_not_cached(tmp_path):
    custom = ProblemPreset("bump", p=lambda x, y: x * (1 - x) * y * (1 - y), q=lambda x, y: 0 * x,
                           params=ModelParams(1.0))
    cfg = make_config(custom, N=12, M_list=(5,), multiplier=2)
    assert reference_key(cfg) is None
    reference_solution(cfg, cache_dir=tmp_path)
    assert not list(tmp_path.iterdir())


def test_reference_self_consistency():
    cfg = make_config(N=32, M_list=(20, 40, 80), ranks=(13,))
    ref = reference_solution(cfg)
    ref2 = reference_solution(dataclasses.replace(cfg, multiplier=32))
    smallest = min(c.relerr for c in convergence_table(cfg, reference=ref))
    assert relerr(ref, ref2) < smallest / 10


# -- convergence table ------------------------------------------------------

def test_table_layout_and_rates():
    cfg = make_config(N=32, M_list=(20, 40), ranks=(8, 3))
    cells = convergence_table(cfg)
    assert [(c.rank, c.M) for c in cells] == [(3, 20), (3, 40), (8, 20), (8, 40)]
    assert all(c.ok and c.relerr >= 0 for c in cells)
    assert cells[0].rate is None and cells[2].rate is None
    assert cells[3].rate == pytest.approx(observed_rate(cells[2].relerr, cells[3].relerr, 0.005, 0.0025))


def test_table_csv_is_deterministic(tmp_path):
    cfg = make_config(N=24, M_list=(10, 20), ranks=(4,))
    write_csv(convergence_table(cfg), tmp_path / "a.csv")
    write_csv(convergence_table(cfg), tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_table_marks_blowup_cells():
    huge = ProblemPreset("huge", p=lambda x, y: 1e200 + 0 * x, q=lambda x, y: 0 * x,
                         params=ModelParams(1.0), f="square")
    cfg = make_config(huge, N=8, M_list=(4, 8), ranks=(1, 2))
    cells = convergence_table(cfg, reference=np.ones(cfg.grid.shape))
    assert len(cells) == 4
    assert all(c.status == "blowup" and math.isnan(c.relerr) and c.rate is None for c in cells)
    assert not any(c.ok for c in cells)


def test_cell_ok_flag():
    assert ConvergenceCell(1, 10, 0.1, 0.5).ok
    assert not ConvergenceCell(1, 10, 0.1, math.nan, status="blowup").ok


# -- snapshots --------------------------------------------------------------

def test_snapshot_initial_time_only():
    cfg = make_config(N=16, M_list=(10,), ranks=(3,))
    series = snapshot_series(cfg, times=[0.0])
    P0 = sample_initial(cfg.grid, cfg.preset).P
    assert series.fullrank[0].tobytes() == P0.tobytes()
    np.testing.assert_allclose(series.lowrank[0], P0, atol=1e-12)


def test_snapshot_final_frame_matches_integration():
    cfg = make_config(N=16, M_list=(10,), ranks=(15,))
    series = snapshot_series(cfg, times=[0.0, 0.05, 0.1])
    direct = integrate_fullrank(sample_initial(cfg.grid, cfg.preset), cfg.grid, TimeGrid(0.1, 10),
                                cfg.params, cfg.nonlinear)
    np.testing.assert_allclose(series.fullrank[-1], direct.P, rtol=0, atol=1e-13)
    assert len(series.lowrank) == 3
    # full rank on a 15x15 interior: both methods agree closely
    assert relerr(series.lowrank[-1], series.fullrank[-1]) < 1e-6


def test_snapshot_rejects_off_grid_time():
    cfg = make_config(N=16, M_list=(10,), ranks=(3,))
    with pytest.raises(ValueError):
        snapshot_series(cfg, times=[0.013])
    with pytest.raises(ValueError):
        snapshot_series(cfg, times=[0.2])


def test_snapshot_shapes_use_their_domain():
    cfg = make_config("astroid", N=24, M_list=(300,), ranks=(5,), snapshot_times=(0.0, 0.5))
    assert cfg.grid == GridSpec.square(24, (-1.0, 1.0, -1.0, 1.0))
    series = snapshot_series(cfg)
    assert series.times == (0.0, 0.5)
    assert all(f.shape == (23, 23) for f in series.fullrank + series.lowrank)
