import numpy as np
import pytest

from driftlab.engine import DiffusionSpec, bm
from driftlab.geometry import MixedNormSpec
from driftlab import ito


@pytest.mark.parametrize("tf", [ito.linear_function([1.0, -2.0], 0.5),
                                ito.square_norm_function(2), ito.time_only_function(2),
                                ito.constant_test_function(3.0)])
def test_derivatives(tf):
    assert ito.check_derivatives(tf) < 1e-6


def test_time_function_residual_is_exactly_zero(bm2):
    r = ito.ito_residual(bm2, ito.time_only_function(2), 500, 1e-2, seed=1)
    assert np.max(np.abs(r["residuals"])) <= 1e-12


def test_linear_mean_and_isometry(bm2):
    c = np.array([1.0, 2.0])
    r = ito.ito_residual(bm2, ito.linear_function(c), 5000, 1e-3, seed=2)
    assert r["mean_ok"]
    # E M^2 = |sigma^T Du|^2 E(tau ^ T) with sigma = I
    assert r["second_moment"] == pytest.approx(5.0 * r["mean_stopped_time"], rel=0.1)
    assert all(cp["ok"] for cp in r["checkpoints"])


def test_square_norm_unbiased_at_coarse_step(bm2):
    # |x_k|^2 - d k h is a discrete martingale, so even h = 1e-2 is unbiased
    r = ito.ito_residual(bm2, ito.square_norm_function(2), 5000, 1e-2, seed=3)
    assert r["mean_ok"]


def test_drift_enters_generator():
    spec = DiffusionSpec(d=2, b=[0.5, 0.0])
    tf = ito.linear_function([1.0, 0.0])
    Lu = tf.generator(spec)
    assert np.allclose(Lu(np.zeros(3), np.zeros((3, 2))), 0.5)
    r = ito.ito_residual(spec, tf, 3000, 1e-3, seed=4)
    assert r["mean_ok"]


def test_start_outside_rejected(bm2):
    with pytest.raises(ValueError):
        ito.ito_residual(bm2, ito.square_norm_function(2), 10, 1e-2, seed=0,
                         start=(0.0, np.array([2.0, 0.0])))


def test_residual_dump_columns(bm2):
    r = ito.ito_residual(bm2, ito.square_norm_function(2), 20, 1e-2, seed=0)
    lines = ito.residual_dump(r).splitlines()
    assert lines[0] == "path_id,M,M2,seed,h,n_paths" and len(lines) == 21


def test_square_integrability_linear(bm2):
    c = np.array([1.0, 1.0])
    r = ito.square_integrability_bound(bm2, ito.linear_function(c), 2000, MixedNormSpec(3, 3, 2),
                                       1e-3, seed=5, resolution=8)
    ref = ito.ito_residual(bm2, ito.linear_function(c), 2000, 1e-3, seed=5)
    assert r["lhs"] == pytest.approx(2.0 * ref["mean_stopped_time"], rel=1e-9)
    assert r["norm_finite_on_grid"] and r["N_hat"] > 0
