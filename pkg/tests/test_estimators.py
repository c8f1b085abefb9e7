import math

import numpy as np
import pytest
from scipy.special import j1, jn_zeros

from driftlab import estimators as est
from driftlab.engine import DiffusionSpec, bm
from driftlab.fields import make_drift, make_test_function
from driftlab.geometry import MixedNormSpec, ParabolicCylinder, TensorGrid


def survival_in_disk(t, n=30):
    """P(sup_{s <= t} |W_s| < 1) for planar Brownian motion (Bessel series)."""
    j = jn_zeros(0, n)
    return float(np.sum(2 / (j * j1(j)) * np.exp(-j * j * t / 2)))


def test_bessel_oracle_values():
    assert survival_in_disk(0.25) == pytest.approx(0.754, abs=2e-3)
    # mean exit time from the oracle: int_0^inf S(t) dt = 1/d
    ts = np.linspace(0, 8, 4001)
    assert np.trapezoid([survival_in_disk(t) if t > 0.02 else 1.0 for t in ts], ts) == \
        pytest.approx(0.5, abs=2e-3)


def test_exit_scaling_brownian(bm2):
    rep = est.exit_moment_scaling(bm2, [0.5, 1.0, 2.0], 2000, 1e-3, seed=3)
    assert rep.exponent_hat == pytest.approx(2.0, abs=0.15)
    assert rep.sandwich["upper_ok"]
    assert len(rep.rows()) == 3 and len(rep.rows()[0]) == len(rep.header)
    with pytest.raises(ValueError):
        est.exit_moment_scaling(bm2, [1.0, 1.5], 10, 1e-2, seed=0)
    with pytest.raises(ValueError):
        est.exit_moment_scaling(bm2, [1.0, 1.2, 1.5], 10, 1e-2, seed=0)


def test_confidence_intervals_shrink_like_sqrt_n(bm2):
    a = est.exit_moment_scaling(bm2, [0.5, 1.0, 2.0], 2000, 2e-3, seed=5)
    b = est.exit_moment_scaling(bm2, [0.5, 1.0, 2.0], 4000, 2e-3, seed=5)
    ratio = np.array(a.se) / np.array(b.se)
    assert np.all(np.abs(ratio - math.sqrt(2)) < 0.2)


def test_tail_fit_and_inconclusive(bm2):
    fit = est.tail_bound_fit(bm2, 1.0, [0.08, 0.1, 0.15, 0.2, 0.3, 0.5], 3000, 1e-3, seed=4)
    assert fit.status == "ok" and fit.c_hat > 0 and fit.r2 > 0.9
    assert fit.theta_hat == pytest.approx(8 * math.sqrt(fit.c_hat))
    tiny = est.tail_bound_fit(bm2, 1.0, [0.01, 0.02], 50, 1e-3, seed=4)
    assert tiny.status == "inconclusive"
    with pytest.raises(ValueError):
        est.tail_bound_fit(bm2, 1.0, [0.5, 2.0], 10, 1e-3, seed=0)


def test_laplace_from_cdf_is_exact():
    rng = np.random.default_rng(0)
    tau = rng.exponential(0.4, 500)
    H = float(tau.max()) + 1.0
    assert est.laplace_from_cdf(tau, 2.0, H) == pytest.approx(np.mean(np.exp(-2.0 * tau)),
                                                              rel=1e-12)


def test_laplace_exit_shape(bm2):
    rep = est.laplace_exit(bm2, 1.0, [1.0, 4.0, 16.0], 2000, 1e-3, seed=2)
    assert rep.concave_decreasing and rep.slope < 0
    assert all(0 < v < 1 for v in rep.estimates)
    with pytest.raises(ValueError):
        est.laplace_exit(bm2, 1.0, [0.0, 1.0], 10, 1e-3, seed=2)


def test_modulus_ratio_brownian(bm2):
    rep = est.modulus_moments(bm2, 2, [(0.0, 0.25), (0.25, 1.25)], 4000, 5e-3, seed=1)
    assert not rep["flag"]
    with pytest.raises(ValueError):
        est.modulus_moments(bm2, 3, [(0.0, 1.0)], 10, 1e-2)


def test_hitting_probability_bessel_oracle(bm2):
    # reaching the slab {1/4 <= t <= 3/4} inside C_1 means no spatial exit by 1/4
    gamma = lambda t, x: (np.asarray(t) >= 0.25) & (np.asarray(t) <= 0.75)  # noqa: E731
    r = est.hitting_probability(bm2, gamma, 1.0, [0.0, 0.0], 4000, 1e-3, seed=6)
    target = survival_in_disk(0.25)
    # grid exit detection lets a few paths survive longer: small upward bias
    assert abs(r["estimate"] - target) <= 0.03 + 3 * r["se"]
    assert r["gamma_hat"] == pytest.approx(0.5, abs=0.02)
    with pytest.raises(ValueError):
        est.hitting_probability(bm2, gamma, 1.0, [0.9, 0.0], 10)


def test_aleksandrov_constant_and_ratio(bm2):
    f = make_test_function("constant", 2)
    r = est.aleksandrov_functional(bm2, f, 2.0, MixedNormSpec(3, 3, 2), 200, 1e-2, T=3.0, seed=0,
                                   theta_hat=5.66, region=[(0, 3), (-3, 3), (-3, 3)],
                                   resolution=8)
    assert r["lhs"] == pytest.approx((1 - math.exp(-6.0)) / 2.0, rel=1e-12)
    assert r["lhs_se"] == pytest.approx(0.0, abs=1e-12)
    assert r["remainder"] == pytest.approx(math.exp(-6.0) / 2.0)
    assert r["ratio"] > 0


def test_bounded_time_functional_matches_exit_times(bm2):
    f = make_test_function("constant", 2)
    r = est.bounded_time_functional(bm2, f, 1.0, MixedNormSpec(3, 3, 2), 300, 1e-2, seed=9,
                                    resolution=8)
    tau = est.exit_times(bm2, 1.0, 300, 1e-2, 9)
    assert r["lhs"] == pytest.approx(np.nanmean(tau), rel=1e-12)


def test_moment_bound_and_induction(bm2):
    f = make_test_function("cylinder", 2)
    r = est.moment_power_bound(bm2, f, 1.0, 2, MixedNormSpec(3, 3, 2), 500, 1e-2, seed=1,
                               theta_hat=5.66, resolution=8)
    assert r["lhs"] > 0 and r["N_hat"] > 0
    starts = TensorGrid.uniform([(0, 1), (-1, 1), (-1, 1)], [2, 3, 3])
    ind = est.induction_check(bm2, f, 1.0, 500, starts, 50, 1e-2, seed=1)
    assert ind["holds"]


def test_resolvent_of_constant(bm2):
    f = make_test_function("constant", 2)
    starts = TensorGrid.uniform([(0, 1), (-1, 1), (-1, 1)], [2, 2, 2])
    rep = est.resolvent_apply(bm2, f, [1.0, 2.0], starts, 3, 0.05, T=4.0, seed=0)
    assert np.allclose(rep.values[0], 1 - math.exp(-4.0))
    assert np.allclose(rep.values[1], (1 - math.exp(-8.0)) / 2)


def test_drifted_exit_scaling_small_budget():
    spec = DiffusionSpec(d=2, b=make_drift("example21", 2, alpha=1.4, beta=0.8), nu=20.0)
    rep = est.exit_moment_scaling(spec, [0.5, 1.0, 2.0], 1000, 2e-3, seed=7)
    assert rep.exponent_hat == pytest.approx(2.0, abs=0.25)


def test_phi_weight():
    w = est.phi_weight(4.0, 32.0)
    assert w(np.array([0.0]), np.array([[0.0, 0.0]]))[0] == 1.0
    assert w(np.array([1.0]), np.array([[0.0, 0.0]]))[0] == pytest.approx(math.exp(-2.0))
