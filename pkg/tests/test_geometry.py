import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from driftlab.geometry import (GridFunction, MixedNormSpec, ParabolicCylinder, TensorGrid,
                               ball_volume, dual_mixed_norm, example21_field, graded_edges,
                               lebesgue_norm, mixed_norm, refine_until_stable,
                               self_similar_rescale)

pos = st.floats(0.1, 10.0)


def test_spec_exponents():
    s = MixedNormSpec(3, 3, 2)
    assert s.holder_defect == pytest.approx(0.0)
    assert s.is_critical()
    assert s.nu() == pytest.approx(0.0)
    assert s.nu(1.0) == pytest.approx(1 / 3)
    assert MixedNormSpec(4, 2, 2).conjugate == (pytest.approx(4 / 3), pytest.approx(2.0))
    assert MixedNormSpec(math.inf, 1, 2).conjugate == (1.0, math.inf)


@pytest.mark.parametrize("p,q,d", [(0.5, 2, 2), (2, 0.9, 2), (2, 2, 1)])
def test_spec_rejects(p, q, d):
    with pytest.raises(ValueError):
        MixedNormSpec(p, q, d)


def test_cylinder_geometry():
    c = ParabolicCylinder.standard(2.0, 1.0, (0.0, 0.0))
    assert c.is_standard and c.radius == 2.0
    assert c.volume == pytest.approx(4.0 * ball_volume(2, 2.0))
    two = c.doubled()
    assert (two.t0, two.rho, two.tau) == (1.0, 4.0, 16.0)
    inside = c.contains(np.array([1.0, 4.99, 5.0, 0.99]), np.array([[0, 0], [1, 1], [0, 0], [0, 0]]))
    assert inside.tolist() == [True, True, False, False]


def test_ball_volume():
    assert ball_volume(2) == pytest.approx(math.pi)
    assert ball_volume(3, 2.0) == pytest.approx(4 / 3 * math.pi * 8)


def test_constant_on_box_exact():
    # ||1||_{L_{p,q}} over [0, T] x [-a, a]^d = (2a)^{d/p} T^{1/q}
    box = [(0.0, 2.0), (-1.5, 1.5), (-1.5, 1.5)]
    for p, q in [(3, 3), (4, 2), (2, 4), (1, 1)]:
        val = mixed_norm(lambda t, x: np.ones(len(t)), MixedNormSpec(p, q, 2), region=box,
                         resolution=6)
        assert val == pytest.approx(3.0 ** (2 / p) * 2.0 ** (1 / q), rel=1e-12)


def test_p_equals_q_is_lebesgue():
    g = TensorGrid.uniform([(0, 1), (-1, 1), (-1, 1)], [5, 7, 7])
    f = GridFunction.from_callable(lambda t, x: np.exp(-t) * (1 + x[:, 0] ** 2), g)
    vol = np.multiply.outer(g.widths[0], g.spatial_volumes())
    assert mixed_norm(f, MixedNormSpec(3, 3, 2)) == pytest.approx(
        lebesgue_norm(f.values, vol, 3), rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(arrays(float, 6, elements=pos), arrays(float, (4, 5), elements=pos),
       st.sampled_from([(3.0, 3.0), (4.0, 2.0), (2.0, 5.0), (6.0, 1.5)]))
def test_separable_factorizes(gt, hx, pq):
    p, q = pq
    g = TensorGrid.uniform([(0, 1), (0, 2), (0, 1)], [6, 4, 5])
    vals = gt[:, None, None] * hx[None]
    n = mixed_norm(GridFunction(g, vals), MixedNormSpec(p, q, 2))
    nt = lebesgue_norm(gt, g.widths[0], q)
    nx = lebesgue_norm(hx, g.spatial_volumes(), p)
    assert n == pytest.approx(nt * nx, rel=1e-10)


@settings(max_examples=40, deadline=None)
@given(arrays(float, (4, 3, 3), elements=st.floats(0, 5)),
       arrays(float, (4, 3, 3), elements=st.floats(0, 5)),
       st.sampled_from([(3.0, 3.0), (4.0, 2.0), (2.0, 4.0), (1.5, 6.0)]))
def test_holder_and_monotone(a, b, pq):
    g = TensorGrid.uniform([(0, 1), (0, 1), (0, 1)], [4, 3, 3])
    spec = MixedNormSpec(*pq, 2)
    vol = np.multiply.outer(g.widths[0], g.spatial_volumes())
    pairing = float(np.sum(a * b * vol))
    bound = mixed_norm(GridFunction(g, a), spec) * dual_mixed_norm(GridFunction(g, b), spec)
    assert pairing <= bound * (1 + 1e-9) + 1e-12
    big = np.maximum(a, b)
    assert mixed_norm(GridFunction(g, a), spec) <= mixed_norm(GridFunction(g, big), spec) + 1e-12


def test_region_masks_and_errors():
    g = TensorGrid.uniform([(0, 1), (-1, 1), (-1, 1)], [4, 8, 8])
    f = GridFunction(g, np.ones(g.shape))
    cyl = ParabolicCylinder.standard(1.0)
    full = mixed_norm(f, MixedNormSpec(2, 2, 2))
    part = mixed_norm(f, MixedNormSpec(2, 2, 2), region=cyl)
    assert part < full
    with pytest.raises(ValueError):
        mixed_norm(f, MixedNormSpec(2, 2, 3))
    with pytest.raises(ValueError):
        mixed_norm(GridFunction(g, np.full(g.shape, np.inf)), MixedNormSpec(2, 2, 2))


def test_graded_edges_contain_singular_point():
    e = graded_edges(-1.0, 1.0, 7, 0.0, 10)
    assert 0.0 in e
    assert np.all(np.diff(e) > 0)
    assert e.min() == -1.0 and e.max() == 1.0
    assert np.min(np.abs(e[e != 0])) == pytest.approx(2 / 7 * 2.0**-10)


def test_singular_norm_converges_under_grading():
    # |x|^{-1/2} on B_1 in 2D is in L_3: int r^{-3/2} 2 pi r dr = 4 pi
    spec = MixedNormSpec(3, 3, 2)

    def f(t, x):
        return np.sum(x**2, -1) ** -0.25

    def at(L):
        return mixed_norm(f, spec, region=ParabolicCylinder.standard(1.0), resolution=[1, 40, 40],
                          singular=[None, 0.0, 0.0], levels=L)

    val, _, hist = refine_until_stable(at, start=4, step=4, rtol=2e-3, max_levels=40)
    assert val == pytest.approx((4 * math.pi) ** (1 / 3), rel=0.03)


def test_gridfunction_roundtrip(tmp_path):
    g = TensorGrid.graded([(0, 1), (-1, 1), (-1, 1)], [3, 4, 4], [None, 0.0, 0.0], 3)
    f = GridFunction.from_callable(lambda t, x: np.c_[t, x[:, 0]], g)
    f.save(tmp_path / "f.csv")
    back = GridFunction.load(tmp_path / "f.csv")
    assert np.array_equal(back.values, f.values)
    assert all(np.array_equal(a, b) for a, b in zip(back.grid.edges, g.edges))


def test_example21_field_and_scaling():
    with pytest.raises(ValueError):
        example21_field(1.0, 0.8, 2)
    h = example21_field(1.4, 0.8, 2)
    # self-similar: R h(R^2 t, R x) = h(t, x) since alpha + 2 beta = d + 1
    t = np.array([0.3, 0.7])
    x = np.array([[0.2, 0.1], [0.5, -0.4]])
    hr = self_similar_rescale(h, 2.0, drift=True)
    assert np.allclose(hr(t, x), h(t, x))
    # the L_{d+1} integral over a cylinder scales like R
    spec = MixedNormSpec(3, 3, 2)
    kw = dict(resolution=[8, 16, 16], singular=[0.0, 0.0, 0.0], levels=12)
    n1 = mixed_norm(h, spec, region=ParabolicCylinder.standard(1.0), **kw)
    n2 = mixed_norm(h, spec, region=ParabolicCylinder.standard(2.0), **kw)
    assert n2**3 / n1**3 == pytest.approx(2.0, rel=0.02)
