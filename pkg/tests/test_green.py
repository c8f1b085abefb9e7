import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.integrate import quad

from driftlab.engine import bm, run_batch
from driftlab.geometry import MixedNormSpec, ParabolicCylinder
from driftlab import green


def _hist(weights, edges, lam=1.0, spatial=False):
    return green.OccupationHistogram(edges, np.asarray(weights, dtype=float), lam, 10, 0.01, 0,
                                     spatial)


def test_spatial_kernel_normalization():
    k = green.spatial_kernel(2.0)
    # int_{R^3} g = 1 / lam
    total, _ = quad(lambda r: 4 * math.pi * r * r * k(np.array([[r, 0, 0]]))[0], 0, 50)
    assert total == pytest.approx(0.5, rel=1e-8)
    with pytest.raises(ValueError):
        green.spatial_kernel(1.0, 2)


def test_pairing_exact_and_mass(bm2):
    batch = run_batch(bm2, 300, (0.0, [0, 0]), 0.01, 3.0, 4)
    edges = green.parabolic_edges((0.0, 1.0), 1.0, 0.25, 2)
    r = green.pairing_check(batch, 1.0, edges, 5, seed=4)
    assert r["mass_ok"] and r["pairs_ok"]
    assert r["max_abs_diff"] < 1e-12
    assert r["total_mass"] == pytest.approx(1 - math.exp(-3.0), rel=1e-12)


def test_histogram_roundtrip_and_coarsen(tmp_path, bm2):
    batch = run_batch(bm2, 200, (0.0, [0, 0]), 0.01, 2.0, 1)
    G = green.estimate_G(batch, 1.0, green.parabolic_edges((0, 1), 1.0, 0.25, 2))
    G.save(tmp_path / "g.txt")
    back = green.OccupationHistogram.load(tmp_path / "g.txt")
    assert np.array_equal(back.weights, G.weights) and back.overflow == G.overflow
    assert G.coarsen(2).total_mass() == pytest.approx(G.total_mass(), rel=1e-12)
    with pytest.raises(ValueError):
        G.coarsen(3)


def test_multiple_binnings_single_pass(bm2):
    batch = run_batch(bm2, 100, (0.0, [0, 0]), 0.01, 1.0, 2)
    e1 = green.parabolic_edges((0, 1), 1.0, 0.25, 2)
    e2 = green.parabolic_edges((0, 0.5), 0.5, 0.125, 2)
    H = green.estimate_histograms(batch, [[1.0], [1.0, 2.0]], [e1, e2])
    assert len(H) == 2 and len(H[1]) == 2
    assert H[0][0].total_mass() == pytest.approx(H[1][0].total_mass(), rel=1e-12)


def test_reverse_holder_constant_and_errors():
    edges = [np.linspace(0, 4, 17), np.linspace(-2, 2, 17), np.linspace(-2, 2, 17)]
    G = _hist(np.ones((16, 16, 16)), edges)
    r = green.reverse_holder_ratio(G, ParabolicCylinder.standard(1.0), 3)
    assert r["ratio"] == pytest.approx(1.0) and r["floor"] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        green.reverse_holder_ratio(G, ParabolicCylinder.standard(1.5), 3)
    with pytest.raises(ValueError):
        green.reverse_holder_ratio(G, ParabolicCylinder.standard(1.0), 1.0)


@settings(max_examples=30, deadline=None)
@given(arrays(float, (8, 8), elements=st.floats(0, 10)), st.floats(1.2, 6.0))
def test_power_mean_floor(weights, p):
    edges = [np.linspace(-2, 2, 9)] * 2
    G = _hist(weights, edges, spatial=True)
    r = green.reverse_holder_ratio(G, green.Ball((0.0, 0.0), 1.0), p)
    assert r["floor_ok"]


def test_dual_norm_uniform_is_stable():
    edges = [np.linspace(0, 1, 9), np.linspace(-1, 1, 9), np.linspace(-1, 1, 9)]
    G = _hist(np.ones((8, 8, 8)), edges)
    r = green.dual_norm_check(G, MixedNormSpec(3, 3, 2), None)
    assert r["stable"] and r["refinement_growth"] == pytest.approx(0.0, abs=1e-12)
    # (p', q') = (3/2, 3/2) norm of 1 on [0,1] x [-1,1]^2
    assert r["dual_norm"] == pytest.approx(4.0 ** (2 / 3), rel=1e-12)


def test_integrability_probe_on_flat_histogram():
    edges = [np.linspace(0, 1, 9)] * 3
    G = _hist(np.ones((8, 8, 8)), edges)
    p = green.integrability_exponent_probe(G)
    assert p["d0_hat"] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        green.integrability_exponent_probe(G, (0.5, 1.5))


def test_gehring_small(bm2):
    rep = green.gehring_sweep(bm2, 1.0, [0.25, 0.5], 3.0, 1000, 2e-3, seed=1, n_centers=2)
    assert rep.floor_ok and len(rep.ratios) == 2
    assert all(r >= 1.0 for r in rep.ratios)
