"""Monte Carlo estimators for exit times, tails, moduli and path integrals.

Every estimator takes a :class:`~driftlab.engine.DiffusionSpec`, a budget
(``n_paths``, step ``h``) and a mandatory ``seed``, and returns a report
object with ``to_dict()`` and ``rows()`` for JSON and CSV emission.  Rows
carry the ``(seed, h, n_paths)`` provenance columns.

Quantities that involve the weight

    Phi_lam(t, x) = exp(-sqrt(lam) (|x| + sqrt(t)) theta / 32)

use an empirical ``theta_hat = 8 sqrt(c_hat)`` obtained from the Gaussian
tail fit of :func:`tail_bound_fit`, so they are conditional on that fit.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .engine import (AnyOf, CylinderExit, DiffusionSpec, HitSet, drive, run_batch)
from .functionals import PathIntegrals, RunningMax, mean_se
from .geometry import MixedNormSpec, ParabolicCylinder, TensorGrid, GridFunction, mixed_norm
from .rng import auxiliary_generator, derive_seed

__all__ = [
    "ScalingFitReport",
    "TailBoundFit",
    "LaplaceReport",
    "exit_times",
    "exit_moment_scaling",
    "laplace_exit",
    "laplace_radius_ratio",
    "laplace_from_cdf",
    "tail_bound_fit",
    "tail_rescaled_comparison",
    "modulus_moments",
    "phi_weight",
    "aleksandrov_functional",
    "resolvent_apply",
    "hitting_probability",
    "moment_power_bound",
    "induction_check",
    "bounded_time_functional",
    "estimate_theta",
]

# Censoring above this fraction triggers a warning.
CENSOR_WARN = 1e-3


def _origin(spec: DiffusionSpec, start):
    if start is None:
        return 0.0, np.zeros(spec.d)
    t0, x0 = start
    return float(t0), np.asarray(x0, dtype=float)


def _horizon(T: float, h: float) -> float:
    """Smallest multiple of ``h`` that is at least ``T``."""
    K = max(1, int(math.ceil(T / h - 1e-9)))
    return K * h


def _fit_line(x, y):
    res = stats.linregress(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    return float(res.slope), float(res.intercept), float(res.stderr), float(res.rvalue**2)


def exit_times(spec: DiffusionSpec, R: float, n_paths: int, h: float, seed: int,
               start=None, horizon: float | None = None) -> np.ndarray:
    """``tau_R`` for every path (first grid exit from ``C_R(start)``)."""
    t0, x0 = _origin(spec, start)
    T = _horizon(R * R if horizon is None else horizon, h)
    batch = run_batch(spec, n_paths, (t0, x0), h, T, seed)
    res = drive(batch, stop=CylinderExit(ParabolicCylinder.standard(R, t0, x0)))
    return np.where(res.stopped, res.stop_time, np.nan)


# ---------------------------------------------------------------------------
# Exit-moment scaling


@dataclass
class ScalingFitReport:
    exponent_hat: float
    intercept: float
    stderr: float
    scales: list
    estimates: list
    se: list
    censored: list
    seed: int
    h: float
    n_paths: int
    sandwich: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.scales) < 3:
            raise ValueError("a scaling fit needs at least 3 scales")

    def ci(self, z: float = 1.96) -> list[tuple[float, float]]:
        return [(m - z * s, m + z * s) for m, s in zip(self.estimates, self.se)]

    def to_dict(self) -> dict:
        return {"exponent_hat": self.exponent_hat, "intercept": self.intercept,
                "stderr": self.stderr, "scales": self.scales, "estimates": self.estimates,
                "se": self.se, "censored": self.censored, "sandwich": self.sandwich,
                "seed": self.seed, "h": self.h, "n_paths": self.n_paths}

    header = ("R", "mean_exit_time", "se", "ci_lo", "ci_hi", "censored", "slope",
              "seed", "h", "n_paths")

    def rows(self) -> list[list]:
        return [[R, m, s, lo, hi, c, self.exponent_hat, self.seed, self.h, self.n_paths]
                for R, m, s, (lo, hi), c in zip(self.scales, self.estimates, self.se,
                                                  self.ci(), self.censored)]


def exit_moment_scaling(spec: DiffusionSpec, radii: Sequence[float], n_paths: int,
                        h: float = 1e-3, seed: int = 0, start=None) -> ScalingFitReport:
    """Fit ``log E tau_R`` against ``log R``.

    The horizon is ``R**2`` for each radius, so the time face of the cylinder
    caps every exit time and nothing is censored.  Each radius uses its own
    derived seed.
    """
    radii = sorted(float(r) for r in radii)
    if len(radii) < 3:
        raise ValueError("need at least 3 radii")
    if radii[-1] / radii[0] < 2.0:
        raise ValueError("radii must span at least one octave")
    means, ses, cens = [], [], []
    for i, R in enumerate(radii):
        tau = exit_times(spec, R, n_paths, h, derive_seed(seed, "exit-scaling", i), start)
        frac = float(np.mean(np.isnan(tau)))
        if frac > CENSOR_WARN:
            warnings.warn(f"{frac:.2%} of paths censored at R={R}; excluded")
        m, s = mean_se(tau[~np.isnan(tau)])
        means.append(float(m))
        ses.append(float(s))
        cens.append(frac)
    slope, icpt, se, _ = _fit_line(np.log(radii), np.log(means))
    ratios = [R * R / m if m > 0 else math.inf for R, m in zip(radii, means)]
    sandwich = {
        "upper_ok": bool(all(m <= R * R * (1 + 1e-12) for R, m in zip(radii, means))),
        "N_hat": float(max(ratios)),
        "ratios": ratios,
    }
    return ScalingFitReport(slope, icpt, se, radii, means, ses, cens, seed, h, n_paths, sandwich)


# ---------------------------------------------------------------------------
# Laplace transform and tails of the exit time


@dataclass
class LaplaceReport:
    R: float
    lambdas: list
    estimates: list
    se: list
    slope: float
    concave_decreasing: bool
    seed: int
    h: float
    n_paths: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    header = ("lambda", "laplace", "se", "R", "slope", "seed", "h", "n_paths")

    def rows(self) -> list[list]:
        return [[lam, m, s, self.R, self.slope, self.seed, self.h, self.n_paths]
                for lam, m, s in zip(self.lambdas, self.estimates, self.se)]


def laplace_exit(spec: DiffusionSpec, R: float, lambda_grid: Sequence[float], n_paths: int,
                 h: float = 1e-3, seed: int = 0, start=None) -> LaplaceReport:
    """``E exp(-lam tau_R)`` per ``lam`` and the slope of its logarithm
    against ``sqrt(lam)`` between the two largest ``lam``."""
    lams = sorted(float(v) for v in lambda_grid)
    if any(v <= 0 for v in lams):
        raise ValueError("lambda values must be positive")
    tau = exit_times(spec, R, n_paths, h, seed, start)
    tau = tau[~np.isnan(tau)]
    vals = np.exp(-np.outer(tau, lams))
    m, s = mean_se(vals, axis=0)
    slope = math.nan
    concave = True
    if len(lams) >= 2:
        x = np.sqrt(lams)
        y = np.log(m)
        slope = float((y[-1] - y[-2]) / (x[-1] - x[-2]))
        dy = np.diff(y) / np.diff(x)
        concave = bool(np.all(np.diff(y) < 0) and np.all(np.diff(dy) <= 1e-12))
    return LaplaceReport(R, lams, m.tolist(), s.tolist(), slope, concave, seed, h, n_paths)


def laplace_radius_ratio(spec: DiffusionSpec, R1: float, R2: float,
                         lambda_grid: Sequence[float], n_paths: int, h: float = 1e-3,
                         seed: int = 0) -> dict:
    """Ratio of the ``sqrt(lam)``-slopes at two radii.

    The ``R2`` run uses ``lam (R1/R2)**2`` so both runs cover the same range
    of ``lam R**2``; the predicted ratio is then ``R2 / R1``.
    """
    a = laplace_exit(spec, R1, lambda_grid, n_paths, h, derive_seed(seed, "laplace", 1))
    scaled = [lam * (R1 / R2) ** 2 for lam in lambda_grid]
    b = laplace_exit(spec, R2, scaled, n_paths, h, derive_seed(seed, "laplace", 2))
    return {"slope_R1": a.slope, "slope_R2": b.slope, "ratio": b.slope / a.slope,
            "target": R2 / R1, "reports": (a, b)}


def laplace_from_cdf(times: np.ndarray, lam: float, horizon: float) -> float:
    """``E e^{-lam tau}`` from the empirical CDF ``F`` of ``tau`` via
    ``e^{-lam H} + lam int_0^H e^{-lam t} F(t) dt`` (exact for step CDFs)."""
    t = np.sort(np.asarray(times, dtype=float))
    n = t.size
    # F is piecewise constant: F = j/n on [t_j, t_{j+1}).
    knots = np.concatenate([t, [horizon]])
    levels = np.arange(1, n + 1) / n
    integral = np.sum(levels * (np.exp(-lam * knots[:-1]) - np.exp(-lam * knots[1:])))
    return float(math.exp(-lam * horizon) + integral)


@dataclass
class TailBoundFit:
    R: float
    t_grid: list
    tail: list
    se: list
    hits: list
    c_hat: float
    a_hat: float
    r2: float
    theta_hat: float
    used: list
    status: str
    seed: int
    h: float
    n_paths: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    header = ("t", "R2_over_t", "tail", "se", "hits", "used", "c_hat", "seed", "h", "n_paths")

    def rows(self) -> list[list]:
        return [[t, self.R**2 / t, p, s, k, int(u), self.c_hat, self.seed, self.h, self.n_paths]
                for t, p, s, k, u in zip(self.t_grid, self.tail, self.se, self.hits, self.used)]


def tail_bound_fit(spec: DiffusionSpec, R: float, t_grid: Sequence[float], n_paths: int,
                   h: float = 1e-3, seed: int = 0, start=None,
                   fit_range: tuple[float, float] = (1e-3, 0.5)) -> TailBoundFit:
    """Fit ``log P(tau_R <= t) ~ a - c R**2 / t`` over the grid points whose
    tail value lies in ``fit_range``; ``theta_hat = 8 sqrt(c_hat)``."""
    tg = sorted(float(t) for t in t_grid)
    if tg[0] <= 0 or tg[-1] > R * R * (1 + 1e-12):
        raise ValueError("t_grid must lie in (0, R^2]")
    tau = exit_times(spec, R, n_paths, h, seed, start, horizon=tg[-1])
    done = np.nan_to_num(tau, nan=np.inf)
    hits = [int(np.sum(done <= t * (1 + 1e-12))) for t in tg]
    tail = np.array(hits, dtype=float) / n_paths
    # CDF values are nondecreasing in t already; the clip guards round-off.
    tail = np.maximum.accumulate(tail)
    se = np.sqrt(tail * (1 - tail) / n_paths)
    lo, hi = fit_range
    used = (tail >= lo) & (tail <= hi) & (np.array(hits) > 0)
    c_hat = a_hat = r2 = theta = math.nan
    status = "inconclusive"
    if used.sum() >= 3:
        x = R * R / np.array(tg)[used]
        slope, a_hat, _, r2 = _fit_line(x, np.log(tail[used]))
        c_hat = -slope
        theta = 8.0 * math.sqrt(c_hat) if c_hat > 0 else math.nan
        status = "ok" if c_hat > 0 else "nonpositive-rate"
    return TailBoundFit(R, tg, tail.tolist(), se.tolist(), hits, float(c_hat), float(a_hat),
                        float(r2), float(theta), used.tolist(), status, seed, h, n_paths)


def tail_rescaled_comparison(spec: DiffusionSpec, base: TailBoundFit, R: float,
                             n_paths: int, seed: int) -> dict:
    """Rerun ``base`` at radius ``R * base.R`` with times and step scaled by
    ``R**2`` and compare the tail values (z-scores of the differences)."""
    s = R * R
    other = tail_bound_fit(spec, base.R * R, [t * s for t in base.t_grid], n_paths,
                           base.h * s, seed)
    a, b = np.array(base.tail), np.array(other.tail)
    se = np.sqrt(np.array(base.se) ** 2 + np.array(other.se) ** 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, np.abs(a - b) / se, np.where(a == b, 0.0, np.inf))
    return {"rescaled": other, "z": z.tolist(), "max_z": float(np.max(z)),
            "agree": bool(np.all(z <= 3.0))}


_THETA_CACHE: dict = {}


def estimate_theta(spec: DiffusionSpec, seed: int, n_paths: int = 20000, h: float = 1e-3) -> float:
    """``theta_hat`` from a unit-radius tail fit (cached per spec and seed)."""
    key = (id(spec), seed, n_paths, h)
    if key not in _THETA_CACHE:
        grid = [0.08, 0.1, 0.125, 0.15, 0.2, 0.25, 0.3, 0.4, 0.5]
        fit = tail_bound_fit(spec, 1.0, grid, n_paths, h, derive_seed(seed, "theta"))
        if not math.isfinite(fit.theta_hat):
            raise RuntimeError("tail fit did not produce a usable theta_hat")
        _THETA_CACHE[key] = fit.theta_hat
    return _THETA_CACHE[key]


# ---------------------------------------------------------------------------
# Modulus of continuity


def modulus_moments(spec: DiffusionSpec, n: int, intervals: Sequence[tuple[float, float]],
                    n_paths: int, h: float = 1e-3, seed: int = 0, start=None,
                    spread: float = 0.15) -> dict:
    """``E sup_{r in [s,t]} |x_r - x_s|**n / |t - s|**(n/2)`` per interval.

    ``flag`` is set when ``max/min - 1`` of the ratios exceeds ``spread``.
    """
    if n not in (2, 4):
        raise ValueError("moment order must be 2 or 4")
    t0, x0 = _origin(spec, start)
    windows = []
    for s, t in intervals:
        if not 0 <= s < t:
            raise ValueError("intervals need 0 <= s < t")
        windows.append((int(round(s / h)), int(round(t / h))))
    K = max(w[1] for w in windows)
    batch = run_batch(spec, n_paths, (t0, x0), h, K * h, seed)
    obs = RunningMax(n_paths, spec.d, windows, n)
    drive(batch, observers=[obs])
    vals = obs.values()
    lengths = np.array([t - s for s, t in intervals])
    m, se = mean_se(vals, axis=1)
    ratio = m / lengths ** (n / 2)
    rse = se / lengths ** (n / 2)
    positive = ratio[ratio > 0]
    rel = float(positive.max() / positive.min() - 1) if positive.size == ratio.size else math.nan
    if np.all(ratio == 0):
        rel = 0.0
    return {"intervals": [list(map(float, iv)) for iv in intervals], "ratios": ratio.tolist(),
            "se": rse.tolist(), "relative_spread": rel,
            "flag": bool(not rel <= spread), "n": n, "seed": seed, "h": h, "n_paths": n_paths}


# ---------------------------------------------------------------------------
# Discounted path integrals


def phi_weight(lam: float, theta: float, origin=None, power: float = 1.0) -> Callable:
    """``Phi_lam**power`` centred at ``origin = (t0, x0)``; ``t < t0`` uses
    ``sqrt(0)``."""
    t0, x0 = (0.0, None) if origin is None else origin
    c = math.sqrt(lam) * theta / 32.0 * power

    def w(t, x):
        t = np.asarray(t, dtype=float)
        xc = x if x0 is None else x - np.asarray(x0)
        r = np.sqrt(np.sum(xc * xc, axis=-1))
        return np.exp(-c * (r + np.sqrt(np.maximum(t - t0, 0.0))))

    return w


def _product(a: Callable, b: Callable) -> Callable:
    return lambda t, x: np.asarray(a(t, x)) * np.asarray(b(t, x))


def _support_box(f, spec: DiffusionSpec, fallback):
    box = getattr(f, "support", None)
    if box is None:
        if fallback is None:
            raise ValueError("test function has no support box; pass region=")
        box = fallback
    return [tuple(map(float, b)) for b in box]


def _warn_unbounded(f):
    sup = getattr(f, "sup", None)
    if sup is not None and not math.isfinite(sup):
        warnings.warn("test function is unbounded; non-finite values are dropped")


def aleksandrov_functional(spec: DiffusionSpec, f: Callable, lam: float,
                           norm_spec: MixedNormSpec, n_paths: int, h: float = 1e-3,
                           T: float | None = None, seed: int = 0, start=None,
                           theta_hat: float | None = None, d0: float | None = None,
                           region=None, resolution: int = 32, rule: str = "left") -> dict:
    """``E int_0^T e^{-lam t} f(t, x_t) dt`` and the weighted norm bound.

    ``ratio = lhs / (lam**(-nu + (d - 2 d0) / (2p)) * ||Phi_lam**(1-nu) f||_{L_{p,q}})``
    with ``nu = 1 - d0/p - 1/q``.  The horizon defaults to ``10 / lam``;
    ``remainder = e^{-lam T} sup|f| / lam`` bounds the truncated tail.
    """
    _warn_unbounded(f)
    t0, x0 = _origin(spec, start)
    T = _horizon(10.0 / lam if T is None else T, h)
    batch = run_batch(spec, n_paths, (t0, x0), h, T, seed)
    obs = PathIntegrals(n_paths, [f], [lam], rule=rule)
    drive(batch, observers=[obs])
    m, se = obs.estimate()
    lhs, lhs_se = float(m[0, 0]), float(se[0, 0])
    d0 = spec.d if d0 is None else d0
    nu = norm_spec.nu(d0)
    if theta_hat is None:
        theta_hat = estimate_theta(spec, seed)
    weighted = _product(phi_weight(lam, theta_hat, (t0, x0), 1.0 - nu), f)
    box = _support_box(f, spec, region)
    rhs = mixed_norm(weighted, norm_spec, region=box, resolution=resolution)
    scale = lam ** (-nu + (spec.d - 2 * d0) / (2 * norm_spec.p))
    ratio = lhs / (scale * rhs) if rhs > 0 else (0.0 if lhs == 0 else math.inf)
    sup = getattr(f, "sup", math.nan)
    return {"lhs": lhs, "lhs_se": lhs_se, "rhs_norm": float(rhs), "ratio": float(ratio),
            "nu": nu, "d0": d0, "theta_hat": theta_hat, "lambda": lam, "T": T,
            "remainder": math.exp(-lam * T) * float(sup) / lam if sup == sup else math.nan,
            "seed": seed, "h": h, "n_paths": n_paths, "per_path": obs.result[:, 0, 0]}


@dataclass
class ResolventReport:
    grid: TensorGrid
    lambdas: list
    values: np.ndarray   # (n_lambda,) + grid.shape
    se: np.ndarray
    norm_ratio: list
    f_norm: float
    slope: float
    seed: int
    h: float
    n_per_start: int

    def field(self, j: int = 0) -> GridFunction:
        return GridFunction(self.grid, self.values[j])

    def to_dict(self) -> dict:
        return {"lambdas": self.lambdas, "norm_ratio": self.norm_ratio, "f_norm": self.f_norm,
                "slope": self.slope, "seed": self.seed, "h": self.h,
                "n_per_start": self.n_per_start, "grid_box": self.grid.box,
                "grid_shape": list(self.grid.shape)}

    header = ("lambda", "norm_ratio", "slope", "seed", "h", "n_paths")

    def rows(self) -> list[list]:
        n = self.n_per_start * int(np.prod(self.grid.shape))
        return [[lam, r, self.slope, self.seed, self.h, n]
                for lam, r in zip(self.lambdas, self.norm_ratio)]


def resolvent_apply(spec: DiffusionSpec, f: Callable, lambdas: Sequence[float],
                    starts: TensorGrid, n_per_start: int, h: float = 1e-3,
                    T: float | None = None, seed: int = 0,
                    norm_spec: MixedNormSpec | None = None) -> ResolventReport:
    """``R_lam f(t, x) = E_{t,x} int_0^inf e^{-lam s} f(t + s, x_s) ds`` at the
    cell centers of ``starts``.

    When ``f`` has a support box the paths stop once their time passes its
    end; otherwise the horizon defaults to ``10 / min(lam)``.  The companion
    ratio ``||R_lam f|| / ||f||`` is computed on the start grid.
    """
    lams = [float(v) for v in lambdas]
    ts, xs = starts.center_points()
    n_starts = ts.size
    t_all = np.repeat(ts, n_per_start)
    x_all = np.repeat(xs, n_per_start, axis=0)
    box = getattr(f, "support", None)
    stop = None
    if box is not None:
        t_end = float(box[0][1])
        stop = HitSet(lambda t, x: np.asarray(t) >= t_end)
        if T is None:
            T = max(t_end - float(ts.min()), h)
    if T is None:
        T = 10.0 / min(lams)
    T = _horizon(T, h)
    batch = run_batch(spec, n_starts * n_per_start, (t_all, x_all), h, T, seed)
    obs = PathIntegrals(batch.n_paths, [f], lams)
    drive(batch, stop=stop, observers=[obs])
    per = obs.result[:, 0, :].reshape(n_starts, n_per_start, len(lams))
    m = per.mean(axis=1)
    se = per.std(axis=1, ddof=1) / math.sqrt(n_per_start) if n_per_start > 1 else np.zeros_like(m)
    values = np.moveaxis(m, -1, 0).reshape((len(lams),) + starts.shape)
    ses = np.moveaxis(se, -1, 0).reshape((len(lams),) + starts.shape)
    norm_spec = norm_spec or MixedNormSpec(3, 3, spec.d)
    f_norm = mixed_norm(GridFunction.from_callable(f, starts), norm_spec)
    ratios = [mixed_norm(GridFunction(starts, v), norm_spec) / f_norm if f_norm > 0 else math.nan
              for v in values]
    slope = math.nan
    if len(lams) >= 2 and all(r > 0 for r in ratios):
        slope = _fit_line(np.log(lams), np.log(ratios))[0]
    return ResolventReport(starts, lams, values, ses, ratios, float(f_norm), float(slope),
                           seed, h, n_per_start)


# ---------------------------------------------------------------------------
# Hitting probabilities


def hitting_probability(spec: DiffusionSpec, gamma: Callable, R: float, x_start,
                        n_paths: int, h: float = 1e-3, seed: int = 0, kappa: float = 0.5,
                        n_volume: int = 20000) -> dict:
    """``P(tau_Gamma <= tau_R)`` for the process started at ``(0, x_start)``,
    with ``C_R = C_R(0, 0)``, and the volume fraction ``|Gamma| / |C_R|``."""
    x_start = np.asarray(x_start, dtype=float)
    if np.linalg.norm(x_start) >= kappa * R:
        raise ValueError("start point must lie in B_{kappa R}")
    cyl = ParabolicCylinder.standard(R, 0.0, np.zeros(spec.d))
    T = _horizon(R * R, h)
    batch = run_batch(spec, n_paths, (0.0, x_start), h, T, seed)
    hit = HitSet(gamma)
    res = drive(batch, stop=AnyOf(hit, CylinderExit(cyl)))
    t_stop = res.stop_time
    in_gamma = np.asarray(gamma(t_stop, res.final_state), dtype=bool) & res.stopped
    p, se = mean_se(in_gamma.astype(float))
    rng = auxiliary_generator(seed, "gamma-volume")
    u = rng.random((n_volume, spec.d + 1))
    tt = u[:, 0] * R * R
    # uniform points of the ball by rejection from the cube
    xx = (2 * u[:, 1:] - 1) * R
    inside = np.sum(xx**2, axis=-1) < R * R
    g_hat = float(np.mean(np.asarray(gamma(tt[inside], xx[inside]), dtype=bool)))
    note = "degenerate target set" if g_hat == 0 else ""
    return {"estimate": float(p), "se": float(se), "gamma_hat": g_hat, "note": note,
            "seed": seed, "h": h, "n_paths": n_paths}


# ---------------------------------------------------------------------------
# Undiscounted moments and bounded-time functionals


def _integrals(spec, f, n_paths, h, T, seed, start, stop=None):
    t0, x0 = _origin(spec, start)
    batch = run_batch(spec, n_paths, (t0, x0), h, _horizon(T, h), seed)
    obs = PathIntegrals(n_paths, [f], [0.0])
    res = drive(batch, stop=stop, observers=[obs])
    return obs.result[:, 0, 0], res


def moment_power_bound(spec: DiffusionSpec, f: Callable, T: float, n: int,
                       norm_spec: MixedNormSpec, n_paths: int, h: float = 1e-3,
                       seed: int = 0, start=None, theta_hat: float | None = None,
                       d0: float | None = None, region=None, resolution: int = 32) -> dict:
    """``lhs = E (int_0^T f(t, x_t) dt)**n`` and the smallest ``N_hat`` with
    ``lhs <= n! N_hat**n T**(n chi) ||Phi_{1/T}**((1-nu)/n) f||**n``,
    ``chi = nu + (2 d0 - d) / (2p)``."""
    if n not in (1, 2, 3):
        raise ValueError("moment order must be 1, 2 or 3")
    _warn_unbounded(f)
    vals, _ = _integrals(spec, f, n_paths, h, T, seed, start)
    lhs, lhs_se = mean_se(vals**n)
    d0 = spec.d if d0 is None else d0
    nu = norm_spec.nu(d0)
    chi = nu + (2 * d0 - spec.d) / (2 * norm_spec.p)
    if theta_hat is None:
        theta_hat = estimate_theta(spec, seed)
    t0, x0 = _origin(spec, start)
    weighted = _product(phi_weight(1.0 / T, theta_hat, (t0, x0), (1.0 - nu) / n), f)
    box = _support_box(f, spec, region)
    box[0] = (max(box[0][0], t0), min(box[0][1], t0 + T))
    norm = mixed_norm(weighted, norm_spec, region=box, resolution=resolution)
    core = math.factorial(n) * T ** (n * chi) * norm**n
    N_hat = (float(lhs) / core) ** (1.0 / n) if core > 0 else math.nan
    return {"lhs": float(lhs), "lhs_se": float(lhs_se), "rhs_core": core, "N_hat": N_hat,
            "n": n, "T": T, "chi": chi, "nu": nu, "theta_hat": theta_hat,
            "seed": seed, "h": h, "n_paths": n_paths}


def induction_check(spec: DiffusionSpec, f: Callable, T: float, n_paths: int,
                    cond_starts: TensorGrid, n_per_start: int, h: float = 1e-3,
                    seed: int = 0, start=None) -> dict:
    """Second moment against the first-moment bound behind the induction on n:

        E (int_0^T f)^2 <= 2 E int_0^T f * sup_{(s,y)} E_{s,y} int_s^T f.

    The supremum is estimated over ``cond_starts`` (cell centers)."""
    vals, _ = _integrals(spec, f, n_paths, h, T, derive_seed(seed, "moments"), start)
    m2, se2 = mean_se(vals**2)
    m1, se1 = mean_se(vals)
    t0, _ = _origin(spec, start)
    t_end = t0 + T
    ts, xs = cond_starts.center_points()
    keep = ts < t_end
    ts, xs = ts[keep], xs[keep]
    t_all = np.repeat(ts, n_per_start)
    x_all = np.repeat(xs, n_per_start, axis=0)
    batch = run_batch(spec, t_all.size, (t_all, x_all), h, _horizon(t_end - ts.min(), h),
                      derive_seed(seed, "conditional"))
    obs = PathIntegrals(batch.n_paths, [f], [0.0])
    drive(batch, stop=HitSet(lambda t, x: np.asarray(t) >= t_end - 1e-12), observers=[obs])
    cond = obs.result[:, 0, 0].reshape(ts.size, n_per_start)
    cm, cse = mean_se(cond, axis=1)
    j = int(np.argmax(cm))
    bound = 2.0 * float(m1) * float(cm[j])
    bound_se = 2.0 * math.hypot(float(se1) * cm[j], float(m1) * float(cse[j]))
    z = (float(m2) - bound) / math.hypot(float(se2), bound_se) if bound_se > 0 else 0.0
    return {"second_moment": float(m2), "second_moment_se": float(se2),
            "first_moment": float(m1), "worst_conditional": float(cm[j]),
            "worst_start": (float(ts[j]), xs[j].tolist()), "bound": bound,
            "holds": bool(z <= 3.0), "z": z}


def bounded_time_functional(spec: DiffusionSpec, f: Callable, R: float,
                            norm_spec: MixedNormSpec, n_paths: int, h: float = 1e-3,
                            seed: int = 0, d0: float | None = None,
                            resolution: int = 32) -> dict:
    """``E int_0^{tau_R} f(t, x_t) dt`` for ``f`` supported in ``C_R`` and
    its ratio to ``R**((2 d0 - d)/p) ||f||_{L_{p,q}(C_R)}``."""
    _warn_unbounded(f)
    cyl = ParabolicCylinder.standard(R, 0.0, np.zeros(spec.d))
    vals, res = _integrals(spec, f, n_paths, h, R * R, seed, None, stop=CylinderExit(cyl))
    lhs, se = mean_se(vals)
    d0 = spec.d if d0 is None else d0
    norm = mixed_norm(f, norm_spec, region=cyl, resolution=resolution)
    core = R ** ((2 * d0 - spec.d) / norm_spec.p) * norm
    return {"R": R, "lhs": float(lhs), "lhs_se": float(se), "norm": float(norm),
            "ratio": float(lhs) / core if core > 0 else math.nan,
            "seed": seed, "h": h, "n_paths": n_paths}
