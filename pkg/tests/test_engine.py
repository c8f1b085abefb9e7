import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from driftlab.engine import (BallExit, CapacityError, CylinderExit, DiffusionSpec, HitSet,
                             PathBatch, bm, drive, dump_paths, exit_time_ball,
                             exit_time_cylinder, hitting_time, load_paths, run_batch,
                             simulate_path, summary_csv)
from driftlab.functionals import mean_se
from driftlab.geometry import ParabolicCylinder
from driftlab.rng import auxiliary_generator, derive_seed, path_generator


def test_streams_are_keyed():
    a = path_generator(7, 3).standard_normal(5)
    b = path_generator(7, 3).standard_normal(5)
    c = path_generator(7, 4).standard_normal(5)
    assert np.array_equal(a, b) and not np.array_equal(a, c)
    assert derive_seed(1, "x") == derive_seed(1, "x") != derive_seed(1, "y")
    assert auxiliary_generator(1, "v").random() == auxiliary_generator(1, "v").random()
    with pytest.raises(ValueError):
        path_generator(-1, 0)


def test_spec_validation():
    with pytest.raises(ValueError):
        DiffusionSpec(d=2, sigma=3.0)  # a = 4.5 I outside [1/4, 4]
    with pytest.raises(ValueError):
        DiffusionSpec(d=2, sigma=[[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(ValueError):
        DiffusionSpec(d=2, nu=0.0)
    s = DiffusionSpec(d=2, sigma=0.0, b=[1.0, 2.0])  # deterministic test process
    assert s.deterministic


def test_truncation():
    s = DiffusionSpec(d=2, b=lambda t, x: x * 10.0, nu=5.0)
    x = np.array([[0.1, 0.2], [1.0, 0.0], [np.inf, 0.0]])
    out = s.drift(np.zeros(3), x)
    assert np.allclose(out[0], [1.0, 2.0])
    assert np.all(out[1:] == 0)


def test_deterministic_drift_is_exact():
    s = DiffusionSpec(d=2, sigma=0.0, b=[1.0, -2.0])
    p = simulate_path(s, (0.0, [0.5, 0.5]), 0.01, 1.0, stream=(3, 0))
    k = np.arange(101)[:, None]
    assert np.allclose(p.states, np.array([0.5, 0.5]) + k * 0.01 * np.array([1.0, -2.0]))


@settings(max_examples=10, deadline=None)
@given(st.integers(1, 40), st.integers(1, 300))
def test_paths_do_not_depend_on_blocking(block, chunk):
    s = bm(2)
    ref = run_batch(s, 13, (0.0, [0, 0]), 0.01, 1.0, 99).materialize()
    other = run_batch(s, 13, (0.0, [0, 0]), 0.01, 1.0, 99, block=block, chunk=chunk).materialize()
    assert np.array_equal(ref, other)


def test_path_index_is_stable_across_batch_size(bm2):
    a = run_batch(bm2, 5, (0.0, [0, 0]), 0.01, 0.5, 4).path(3)
    b = run_batch(bm2, 50, (0.0, [0, 0]), 0.01, 0.5, 4).path(3)
    assert np.array_equal(a.states, b.states)
    c = simulate_path(bm2, (0.0, [0, 0]), 0.01, 0.5, stream=(4, 3))
    assert np.array_equal(a.states, c.states)


def test_brownian_moments(bm2):
    x = run_batch(bm2, 20000, (0.0, [0, 0]), 0.05, 1.0, 5).materialize()[:, -1]
    assert np.allclose(x.mean(0), 0, atol=0.03)
    assert np.allclose(np.cov(x.T), np.eye(2), atol=0.04)


def test_horizon_must_be_multiple(bm2):
    with pytest.raises(ValueError):
        run_batch(bm2, 3, (0.0, [0, 0]), 0.3, 1.0, 1)
    with pytest.raises(ValueError):
        run_batch(bm2, 3, (0.0, [0, 0, 0]), 0.1, 1.0, 1)


def test_capacity_guard(bm2):
    with pytest.raises(CapacityError):
        run_batch(bm2, 200000, (0.0, [0, 0]), 1e-4, 1.0, 1).materialize()


def test_drive_matches_single_path_rules(bm2):
    batch = run_batch(bm2, 40, (0.0, [0, 0]), 0.01, 1.0, 8)
    cyl = ParabolicCylinder.standard(0.7)
    res = drive(batch, stop=CylinderExit(cyl))
    for i in range(0, 40, 7):
        rec = exit_time_cylinder(batch.path(i), 0.7)
        assert rec.exit_time == pytest.approx(res.stop_time[i])
        assert np.array_equal(rec.exit_point, res.final_state[i])
    rb = drive(batch, stop=BallExit(0.5, [0, 0]))
    rec = exit_time_ball(batch.path(2), 0.5)
    assert rec.exit_step == rb.stop_step[2] or (rec.censored and not rb.stopped[2])
    hit = hitting_time(batch.path(0), lambda t, x: np.asarray(t) >= 0.3)
    assert hit.exit_time == pytest.approx(0.3)


def test_ball_exit_oracle_coarse(bm2):
    # E tau = (R^2 - |x|^2) / d; grid detection biases upward by O(sqrt h)
    batch = run_batch(bm2, 4000, (0.0, [0.3, 0.0]), 1e-3, 4.0, 17)
    res = drive(batch, stop=BallExit(1.0, [0, 0]))
    m, se = mean_se(res.stop_time)
    assert res.stopped.all()
    assert abs(m - (1 - 0.09) / 2) <= 0.05 + 3 * se


def test_per_path_starts(bm2):
    t0 = np.array([0.0, 1.0])
    x0 = np.array([[0.0, 0.0], [5.0, 5.0]])
    st_ = run_batch(bm2, 2, (t0, x0), 0.1, 1.0, 3).materialize()
    assert np.array_equal(st_[:, 0], x0)
    res = drive(run_batch(bm2, 2, (t0, x0), 0.1, 1.0, 3),
                stop=HitSet(lambda t, x: np.asarray(t) >= 1.5))
    assert res.stop_time.tolist() == [1.0, pytest.approx(0.5)]
    assert res.stopped.tolist() == [False, True]


def test_dump_and_summary(tmp_path, bm2):
    batch = run_batch(bm2, 3, (0.0, [0, 0]), 0.1, 0.5, 2)
    dump_paths(batch, tmp_path / "p.bin")
    back = load_paths(tmp_path / "p.bin")
    states = batch.materialize()
    assert [b[0] for b in back] == [0, 1, 2]
    assert all(np.array_equal(b[2], s) for b, s in zip(back, states))
    text = summary_csv(batch, drive(batch, stop=BallExit(0.3, [0, 0])))
    head = text.splitlines()[0].split(",")
    assert head[-3:] == ["seed", "h", "n_paths"]
