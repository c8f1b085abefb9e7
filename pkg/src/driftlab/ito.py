"""Path-wise checks of Ito's formula for the simulated diffusion.

For a test function ``u`` and the exit time ``tau`` from its domain ``Q``,

    M = u(t ^ tau, x_{t ^ tau}) - u(0, x_0)
        - int_0^{t ^ tau} [d_t u + a^{ij} D_ij u + b_nu^i D_i u](s, x_s) ds

is a martingale increment, so ``E M = 0``.  The time integral uses the
trapezoid rule over the steps before the exit; the exit state is the first
grid point outside ``Q``.  Non-finite integrand values (the singular set of a
Sobolev-type test function) are replaced by zero and counted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .engine import DiffusionSpec, HitSet, PathChunk, StopResult, drive, run_batch
from .functionals import mean_se
from .geometry import MixedNormSpec, TensorGrid, GridFunction, mixed_norm
from .report import table_text
from .rng import auxiliary_generator

__all__ = [
    "TestFunction",
    "linear_function",
    "square_norm_function",
    "time_only_function",
    "constant_test_function",
    "check_derivatives",
    "ito_residual",
    "square_integrability_bound",
]


@dataclass
class TestFunction:
    """``u`` with analytic derivatives on a spacetime domain.

    ``inside(t, x)`` is the membership test of the open domain ``Q``; ``box``
    is a spacetime box containing ``Q`` (used for quadrature and sampling).
    ``tag`` is ``"smooth"`` or ``"sobolev-singular"``; for the latter
    ``singular`` names the per-axis singular coordinates (or ``None``).
    """

    __test__ = False  # not a pytest class

    name: str
    u: Callable
    du_dt: Callable
    grad: Callable
    hess: Callable
    inside: Callable
    box: list
    tag: str = "smooth"
    singular: list | None = None
    meta: dict = field(default_factory=dict)

    def generator(self, spec: DiffusionSpec) -> Callable:
        """``(t, x) -> d_t u + a^{ij} D_ij u + b_nu^i D_i u``."""

        def Lu(t, x):
            a = spec.diffusion_matrix(t, x)
            H = np.asarray(self.hess(t, x))
            with np.errstate(invalid="ignore", over="ignore"):
                val = np.asarray(self.du_dt(t, x)) + np.einsum("nij,nij->n", a, H)
                if spec.b is not None:
                    val = val + np.sum(spec.drift(t, x) * np.asarray(self.grad(t, x)), axis=-1)
            return val

        return Lu

    def derivative_magnitude(self, t, x) -> np.ndarray:
        """``(|d_t u|^2 + |Du|^2 + |D^2 u|^2)^{1/2}``."""
        dt = np.asarray(self.du_dt(t, x))
        g = np.asarray(self.grad(t, x))
        H = np.asarray(self.hess(t, x))
        return np.sqrt(dt**2 + np.sum(g**2, axis=-1) + np.sum(H**2, axis=(-2, -1)))


def _cyl_inside(R: float, d: int):
    def inside(t, x):
        t = np.asarray(t)
        return (t >= 0) & (t < R * R) & (np.sum(np.asarray(x) ** 2, axis=-1) < R * R)

    return inside


def _cyl_box(R: float, d: int) -> list:
    return [(0.0, R * R)] + [(-R, R)] * d


def linear_function(c, const: float = 0.0, R: float = 1.0) -> TestFunction:
    """``u = c . x + const`` on ``C_R``."""
    c = np.asarray(c, dtype=float)
    d = c.size
    return TestFunction(
        "linear",
        lambda t, x: np.asarray(x) @ c + const,
        lambda t, x: np.zeros(np.shape(x)[0]),
        lambda t, x: np.broadcast_to(c, np.shape(x)).copy(),
        lambda t, x: np.zeros((np.shape(x)[0], d, d)),
        _cyl_inside(R, d), _cyl_box(R, d), meta={"c": c.tolist(), "R": R})


def square_norm_function(d: int = 2, R: float = 1.0) -> TestFunction:
    """``u = |x|^2`` on ``C_R``."""
    return TestFunction(
        "square-norm",
        lambda t, x: np.sum(np.asarray(x) ** 2, axis=-1),
        lambda t, x: np.zeros(np.shape(x)[0]),
        lambda t, x: 2.0 * np.asarray(x),
        lambda t, x: np.broadcast_to(2.0 * np.eye(d), (np.shape(x)[0], d, d)).copy(),
        _cyl_inside(R, d), _cyl_box(R, d), meta={"R": R})


def time_only_function(d: int = 2, R: float = 1.0) -> TestFunction:
    """``u = t`` on ``C_R``."""
    return TestFunction(
        "time",
        lambda t, x: np.broadcast_to(np.asarray(t, dtype=float), (np.shape(x)[0],)).copy(),
        lambda t, x: np.ones(np.shape(x)[0]),
        lambda t, x: np.zeros(np.shape(x)),
        lambda t, x: np.zeros((np.shape(x)[0], d, d)),
        _cyl_inside(R, d), _cyl_box(R, d), meta={"R": R})


def constant_test_function(value: float, d: int = 2, R: float = 1.0) -> TestFunction:
    return TestFunction(
        "constant",
        lambda t, x: np.full(np.shape(x)[0], float(value)),
        lambda t, x: np.zeros(np.shape(x)[0]),
        lambda t, x: np.zeros(np.shape(x)),
        lambda t, x: np.zeros((np.shape(x)[0], d, d)),
        _cyl_inside(R, d), _cyl_box(R, d), meta={"value": value, "R": R})


def check_derivatives(tf: TestFunction, n_points: int = 200, seed: int = 0,
                      eps: float = 1e-5, margin: float = 0.05) -> float:
    """Largest relative mismatch between the analytic derivatives and central
    differences at random interior points (points within ``margin`` of a
    singular coordinate are skipped)."""
    rng = auxiliary_generator(seed, "fd-check", tf.name)
    lo = np.array([b[0] for b in tf.box])
    hi = np.array([b[1] for b in tf.box])
    pts = lo + (hi - lo) * rng.random((8 * n_points, lo.size))
    t, x = pts[:, 0], pts[:, 1:]
    ok = np.asarray(tf.inside(t, x), dtype=bool)
    if tf.singular is not None:
        for ax, s in enumerate(tf.singular):
            if s is None:
                continue
            if ax == 0:
                ok &= np.abs(t - s) > margin
            else:
                ok &= np.sqrt(np.sum(x**2, axis=-1)) > margin
    t, x = t[ok][:n_points], x[ok][:n_points]
    d = x.shape[1]
    worst = 0.0

    def rel(a, b):
        scale = np.maximum(np.abs(b), 1.0)
        return float(np.max(np.abs(a - b) / scale)) if a.size else 0.0

    fd_t = (tf.u(t + eps, x) - tf.u(t - eps, x)) / (2 * eps)
    worst = max(worst, rel(fd_t, tf.du_dt(t, x)))
    g = tf.grad(t, x)
    for i in range(d):
        e = np.zeros(d)
        e[i] = eps
        fd = (tf.u(t, x + e) - tf.u(t, x - e)) / (2 * eps)
        worst = max(worst, rel(fd, g[:, i]))
        fdg = (tf.grad(t, x + e) - tf.grad(t, x - e)) / (2 * eps)
        worst = max(worst, rel(fdg, tf.hess(t, x)[:, :, i]))
    return worst


class _ItoObserver:
    """Trapezoid integral of ``Lu`` with optional checkpoints."""

    def __init__(self, n: int, Lu: Callable, checkpoints: Sequence[int], u: Callable, u0):
        self.Lu = Lu
        self.u = u
        self.u0 = u0
        self.integral = np.zeros(n)
        self.checkpoints = list(checkpoints)
        self.at_cp = np.full((len(self.checkpoints), n), np.nan)
        self.nonfinite = 0
        self.prev = {}

    def update(self, ch: PathChunk) -> None:
        C, m = ch.n_intervals, ch.ids.size
        d = ch.states.shape[-1]
        tt = ch.times()
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            g = np.asarray(self.Lu(tt.reshape(-1), ch.states.reshape(-1, d)),
                           dtype=float).reshape(C + 1, m)
        bad = ~np.isfinite(g)
        # row 0 repeats the previous chunk's last row; count each point once
        self.nonfinite += int(bad[1:].sum() + (bad[0].sum() if ch.k0 == 0 else 0))
        g = np.where(bad, 0.0, g)
        contrib = 0.5 * ch.h * (g[:-1] + g[1:]) * ch.live
        cum = self.integral[ch.ids][None, :] + np.cumsum(contrib, axis=0)
        for c, Kc in enumerate(self.checkpoints):
            r = Kc - ch.k0
            if 1 <= r <= C:
                alive = ch.live[r - 1]
                if alive.any():
                    ids = ch.ids[alive]
                    uval = self.u(tt[r, alive], ch.states[r, alive])
                    self.at_cp[c, ids] = uval - self.u0[ids] - cum[r - 1, alive]
        self.integral[ch.ids] = cum[-1]

    def finalize(self, res: StopResult) -> None:
        pass


def ito_residual(spec: DiffusionSpec, tf: TestFunction, n_paths: int, h: float = 1e-3,
                 seed: int = 0, start=None, T: float | None = None,
                 checkpoints: Sequence[float] = (0.25, 0.5, 1.0)) -> dict:
    """Mean and second moment of the Ito residual ``M`` stopped at ``T ^ tau``.

    ``checkpoints`` are fractions of ``T`` at which ``M`` is also recorded
    (optional stopping).  ``T`` defaults to the time extent of ``tf.box``
    minus the start time.
    """
    t0 = 0.0 if start is None else float(start[0])
    x0 = np.zeros(spec.d) if start is None else np.asarray(start[1], dtype=float)
    if not bool(np.asarray(tf.inside(np.array([t0]), x0[None]))[0]):
        raise ValueError("start point must lie in Q")
    if T is None:
        T = tf.box[0][1] - t0
    K = max(1, int(math.ceil(T / h - 1e-9)))
    batch = run_batch(spec, n_paths, (t0, x0), h, K * h, seed)
    u0 = np.full(n_paths, float(tf.u(np.array([t0]), x0[None])[0]))
    cps = [max(1, int(round(f * K))) for f in checkpoints]
    obs = _ItoObserver(n_paths, tf.generator(spec), cps, tf.u, u0)
    exit_rule = HitSet(lambda t, x: ~np.asarray(tf.inside(t, x), dtype=bool))
    res = drive(batch, stop=exit_rule, observers=[obs])
    t_end = t0 + res.stop_time
    M = tf.u(t_end, res.final_state) - u0 - obs.integral
    m, se = mean_se(M)
    m2, se2 = mean_se(M**2)
    cp_rows = []
    for c, Kc in enumerate(cps):
        vals = np.where(res.stop_step < Kc, M, obs.at_cp[c])
        cm, cse = mean_se(vals)
        cp_rows.append({"t": Kc * h, "mean": float(cm), "se": float(cse),
                        "ok": bool(abs(cm) <= 3 * cse + 1e-12)})
    tau = np.minimum(res.stop_time, K * h)
    gi, gi_se = mean_se(obs.integral)
    return {"function": tf.name, "mean": float(m), "se": float(se),
            "ci": (float(m - 1.96 * se), float(m + 1.96 * se)),
            "second_moment": float(m2), "second_moment_se": float(se2),
            "mean_ok": bool(abs(m) <= 3 * se + 1e-12), "checkpoints": cp_rows,
            "mean_stopped_time": float(tau.mean()), "stopped_time_se": float(mean_se(tau)[1]),
            "nonfinite_replaced": obs.nonfinite,
            "generator_integral": float(gi), "generator_integral_se": float(gi_se), "exited": int(res.stopped.sum()),
            "nu": spec.nu, "seed": seed, "h": h, "n_paths": n_paths, "residuals": M}


def residual_dump(result: dict) -> str:
    """CSV ``path_id, M, M2`` with provenance columns."""
    M = result["residuals"]
    rows = [[i, v, v * v, result["seed"], result["h"], result["n_paths"]] for i, v in enumerate(M)]
    return table_text(("path_id", "M", "M2", "seed", "h", "n_paths"), rows)


class _GradSquare:
    def __init__(self, n: int, grad: Callable):
        self.grad = grad
        self.integral = np.zeros(n)

    def update(self, ch: PathChunk) -> None:
        C, m = ch.n_intervals, ch.ids.size
        d = ch.states.shape[-1]
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            g = np.asarray(self.grad(ch.times().reshape(-1), ch.states.reshape(-1, d)))
            v = np.sum(g**2, axis=-1).reshape(C + 1, m)
        v = np.where(np.isfinite(v), v, 0.0)
        self.integral[ch.ids] += (0.5 * ch.h * (v[:-1] + v[1:]) * ch.live).sum(axis=0)

    def finalize(self, res: StopResult) -> None:
        pass


def square_integrability_bound(spec: DiffusionSpec, tf: TestFunction, n_paths: int,
                               norm_spec: MixedNormSpec, h: float = 1e-3, seed: int = 0,
                               d0: float | None = None, resolution: int = 32,
                               levels: int = 0) -> dict:
    """``lhs = E int_0^tau |Du|^2 ds`` and the smallest ``N_hat`` with
    ``lhs <= N_hat (sup_Q |u| + T^{(2 d0 - d)/p} ||(d_t u, Du, D^2 u)||_{L_{p,q}(Q)})``,
    ``T`` the time extent of ``Q``.
    """
    x0 = np.zeros(spec.d)
    T = tf.box[0][1]
    K = max(1, int(math.ceil(T / h - 1e-9)))
    batch = run_batch(spec, n_paths, (0.0, x0), h, K * h, seed)
    obs = _GradSquare(n_paths, tf.grad)
    drive(batch, stop=HitSet(lambda t, x: ~np.asarray(tf.inside(t, x), dtype=bool)),
          observers=[obs])
    lhs, lhs_se = mean_se(obs.integral)
    grid = TensorGrid.graded(tf.box, [resolution] * (spec.d + 1), tf.singular, levels)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        mag = GridFunction.from_callable(tf.derivative_magnitude, grid)
        uvals = GridFunction.from_callable(tf.u, grid)
    t, x = grid.center_points()
    inside = np.asarray(tf.inside(t, x), dtype=bool).reshape(grid.shape)
    vals = np.where(inside, mag.values, 0.0)
    finite = bool(np.all(np.isfinite(vals)))
    norm = mixed_norm(GridFunction(grid, np.where(np.isfinite(vals), vals, 0.0)), norm_spec)
    sup_u = float(np.max(np.abs(np.where(inside, uvals.values, 0.0))))
    d0 = spec.d if d0 is None else d0
    rhs_core = sup_u + T ** ((2 * d0 - spec.d) / norm_spec.p) * norm
    N_hat = float(lhs) / rhs_core if rhs_core > 0 else (0.0 if lhs == 0 else math.inf)
    return {"function": tf.name, "lhs": float(lhs), "lhs_se": float(lhs_se), "sup_u": sup_u,
            "norm": float(norm), "rhs_core": rhs_core, "N_hat": N_hat,
            "norm_finite_on_grid": finite, "seed": seed, "h": h, "n_paths": n_paths}
