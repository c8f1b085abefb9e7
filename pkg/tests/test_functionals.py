import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from driftlab.engine import DiffusionSpec, HitSet, drive, run_batch
from driftlab.functionals import (Occupation, PathIntegrals, RunningMax, discount_weights,
                                  mean_se)


@pytest.mark.parametrize("lam", [0.0, 0.5, 3.0])
def test_discount_weights_sum(lam):
    h, K = 0.01, 300
    w = discount_weights(lam, h, np.arange(K))
    exact = K * h if lam == 0 else (1 - math.exp(-lam * K * h)) / lam
    assert w.sum() == pytest.approx(exact, rel=1e-12)


def test_constant_integrand_is_exact(bm2):
    batch = run_batch(bm2, 50, (0.0, [0, 0]), 0.01, 2.0, 1)
    obs = PathIntegrals(50, [lambda t, x: np.ones(len(t))], [0.0, 1.0, 4.0])
    drive(batch, observers=[obs])
    for j, lam in enumerate([0.0, 1.0, 4.0]):
        exact = 2.0 if lam == 0 else (1 - math.exp(-2 * lam)) / lam
        assert np.allclose(obs.result[:, 0, j], exact, rtol=1e-12)


def test_stopped_integral_equals_stop_time(bm2):
    batch = run_batch(bm2, 100, (0.0, [0, 0]), 0.01, 2.0, 2)
    obs = PathIntegrals(100, [lambda t, x: np.ones(len(t))], [0.0])
    res = drive(batch, stop=HitSet(lambda t, x: np.sum(x**2, -1) >= 0.25), observers=[obs])
    assert np.allclose(obs.result[:, 0, 0], res.stop_time, atol=1e-12)


def test_trapezoid_rule_on_linear_time():
    s = DiffusionSpec(d=2, sigma=0.0, b=[0.0, 0.0])
    batch = run_batch(s, 2, (0.0, [0, 0]), 0.1, 1.0, 0)
    obs = PathIntegrals(2, [lambda t, x: np.asarray(t)], [0.0], rule="trapezoid")
    drive(batch, observers=[obs])
    assert np.allclose(obs.result[:, 0, 0], 0.5)  # exact for linear integrands
    with pytest.raises(ValueError):
        PathIntegrals(2, [], [0.0], rule="simpson")


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1.5, 1.5, allow_nan=False), min_size=1, max_size=60))
def test_fast_binning_matches_searchsorted(vals):
    e = np.linspace(-1.0, 1.0, 9)
    occ = Occupation([e], [0.0], 1, spatial=True)
    v = np.array(vals + list(e))  # include exact edges
    fast = occ._axis_index(0, v)
    ref = np.searchsorted(e, v, side="right") - 1
    ref = np.where((v >= e[0]) & (v < e[-1]), ref, -1)
    assert np.array_equal(fast, ref)


def test_occupation_mass_and_groups(bm2):
    batch = run_batch(bm2, 64, (0.0, [0, 0]), 0.01, 1.0, 3)
    edges = [np.linspace(0, 0.5, 6), np.linspace(-0.5, 0.5, 5), np.linspace(-0.5, 0.5, 5)]
    occ = Occupation(edges, [0.0, 2.0], 64, groups=4)
    drive(batch, observers=[occ])
    for j, lam in enumerate([0.0, 2.0]):
        inside = float((occ.density(j) * occ.volumes()).sum())
        exact = 1.0 if lam == 0 else (1 - math.exp(-lam)) / lam
        assert inside + occ.overflow(j) == pytest.approx(exact, rel=1e-12)
        groups = sum(occ.density(j, g) * occ._group_size(g) for g in range(4)) / 64
        assert np.allclose(groups, occ.density(j))


def test_running_max_deterministic():
    s = DiffusionSpec(d=2, sigma=0.0, b=[3.0, 4.0])
    batch = run_batch(s, 2, (0.0, [0, 0]), 0.01, 2.0, 0)
    obs = RunningMax(2, 2, [(0, 100), (50, 200)], power=2)
    drive(batch, observers=[obs])
    assert np.allclose(obs.values()[0], 25.0)
    assert np.allclose(obs.values()[1], 25.0 * 1.5**2)


def test_mean_se():
    m, se = mean_se(np.array([1.0, 3.0]))
    assert m == 2.0 and se == pytest.approx(1.0)
