import math
import re

import numpy as np
import pytest

from driftlab.geometry import MixedNormSpec
from driftlab.ito import TestFunction, check_derivatives
from driftlab import transport as tr


@pytest.fixture(scope="module")
def inst():
    return tr.example51_instance(d=2, eps=0.5, q0=2.0)


def test_baseline_instance_arithmetic(inst):
    assert inst.p0 == pytest.approx(2.0)
    assert inst.alpha == pytest.approx(0.375)
    assert inst.beta == pytest.approx(0.75)
    assert inst.p_interval == (pytest.approx(4.0), pytest.approx(8.0))
    assert inst.p == pytest.approx(6.0) and inst.q == pytest.approx(1.5)
    assert inst.alpha * inst.q == pytest.approx(0.5625)
    assert inst.p * (1 - inst.beta) == pytest.approx(1.5)
    assert all(inst.checks.values())
    assert inst.u(np.array([0.0]), np.zeros((1, 2)))[0] == 1.0


@pytest.mark.parametrize("kw,msg", [
    (dict(eps=1.0), "eps"),
    (dict(eps=0.0), "eps"),
    (dict(eps=0.5, q0=1.5), "q0 >= 2"),
    (dict(eps=0.5, p0=2.5), "d/p0 + 1/q0"),
    (dict(eps=0.9), "p0 >= d"),
    (dict(eps=0.5, p_choice=9.0), "outside the admissible interval"),
])
def test_construction_errors_name_the_inequality(kw, msg):
    with pytest.raises(tr.ConstructionError, match=re.escape(msg)):
        tr.example51_instance(d=2, **kw)


def test_derivatives_against_finite_differences(inst):
    assert check_derivatives(inst.test_function(), margin=0.05) < 1e-6


def test_transport_identity(inst):
    assert tr.verify_transport_identity(inst, 1000, seed=1) <= 1e-10
    for t_min in (1e-3, 1e-6, 1e-9):
        assert tr.verify_transport_identity(inst, 300, seed=2, t_min=t_min) <= 1e-10
    assert tr.verify_transport_identity(inst, 1000, seed=1, drift_scale=2.0) > 1e-2
    with pytest.raises(ValueError):
        tr.verify_transport_identity(inst, points=(np.array([0.0]), np.array([[0.1, 0.1]])))


def test_boundary_and_bookkeeping(inst):
    assert tr.boundary_check(inst, 500, seed=0) <= 1e-12
    b = tr.exponent_bookkeeping(2, 3.0, 3.0, 8.0)
    assert b["critical"] and b["identity_holds"] and b["kappa"] == pytest.approx(0.75)
    off = tr.exponent_bookkeeping(2, inst.p0, inst.q0, inst.p)
    assert not off["critical"] and not off["identity_holds"]


def test_membership_and_violation(inst):
    m = tr.membership_check(inst, levels=(8, 16, 24), resolution=16, alpha_violation=0.8)
    assert m["consistent"]
    v = m["du_dt_violation"]["norms"]
    assert v[1] > 1.5 * v[0] and v[2] > 1.5 * v[1]
    assert m["u_sup"] == 1.0


def test_counterexample_report(inst):
    r = tr.counterexample_report(inst, 200, seed=0)
    assert r["u0"] == 1.0
    assert r["failed_hypothesis"] == "d/p0+1/q0 = 1"
    assert r["d/p0+1/q0"] == pytest.approx(1.5)


def _const(value):
    d = 2
    return TestFunction("const", lambda t, x: np.full(len(t), value),
                        lambda t, x: np.zeros(len(t)), lambda t, x: np.zeros((len(t), d)),
                        lambda t, x: np.zeros((len(t), d, d)), tr._slab_inside(1.0),
                        [(-1.0, 1.0), (-1.0, 1.0), (-1.0, 1.0)])


def test_negative_constant_bound_holds():
    r = tr.max_principle_bound(_const(-1.0), np.zeros(2), 0.4, 20.0, 200,
                               MixedNormSpec(8, 4 / 3, 2), 3.0, 3.0, 1e-2, seed=0)
    assert r["u0"] == -1.0 and r["u0_mc"] == 0.0 and r["laplacian_term"] == 0.0
    assert r["u0"] <= r["u0_mc"]


def test_positive_boundary_rejected():
    with pytest.raises(ValueError, match="parabolic boundary"):
        tr.max_principle_bound(_const(1.0), np.zeros(2), 0.4, 20.0, 50,
                               MixedNormSpec(8, 4 / 3, 2), 3.0, 3.0, 1e-2, seed=0)


def test_subsolution_bound_and_family():
    fam = tr.subsolution_family(2)
    assert len(fam) == 3
    tf, b = fam[0]
    r = tr.max_principle_bound(tf, b, 0.2, 20.0, 300, MixedNormSpec(8, 4 / 3, 2), 3.0, 3.0,
                               1e-2, seed=1)
    assert r["hypotheses"]["transport_ok"] and r["hypotheses"]["boundary_ok"]
    assert r["u0"] == 0.0 <= r["u0_mc"]
    # b = 0, u = -t - |x|^2: -Lu = 1 + d eps^2 on every step
    assert r["u0_mc"] == pytest.approx((1 + 2 * 0.04) * 1.0, rel=0.02)
    assert math.isfinite(r["N_hat"]) and math.isfinite(r["N_hat_sq"])


def test_equality_case_trend_and_nu_sweep():
    tf, b = tr.transport_solution(2)
    vals = [tr.max_principle_bound(tf, b, e, 20.0, 300, MixedNormSpec(8, 4 / 3, 2), 3.0, 3.0,
                                   1e-2, seed=2)["u0_mc"] for e in (0.4, 0.2, 0.1)]
    assert vals[0] > vals[1] > vals[2] > 0
    fam_tf, fam_b = tr.subsolution_family(2)[2]
    ns = tr.nu_sweep(fam_tf, fam_b, 0.2, (5.0, 20.0), 200, 1e-2, seed=3)
    assert ns["stable"] and ns["u0_mc"][0] == ns["u0_mc"][1]


def test_small_epsilon_sweep():
    r = tr.epsilon_sweep((0.4, 0.2), n_paths=200, h=1e-2, seed=0)
    assert len(r["N_hat"]) == 2 and r["spread"] >= 1.0
    assert r["bookkeeping"]["kappa_below_1"]
