"""Named coefficient and test fields, resolvable from configuration files.

Every field is a plain callable ``f(t, x)`` (see :mod:`driftlab.geometry`
for the shape convention).  Test functions for path functionals may carry a
``support`` attribute, a spacetime box outside which they vanish; quadrature
and resolvent code use it to size grids and to skip work.
"""

from __future__ import annotations

import math

import numpy as np

from .geometry import ParabolicCylinder, example21_field


def _norm(x):
    return np.sqrt(np.sum(x * x, axis=-1))


def zero_drift(d: int):
    def b(t, x):
        return np.zeros_like(x)

    b.bounded_by = 0.0
    return b


def constant_drift(d: int, c):
    c = np.asarray(c, dtype=float).reshape(d)

    def b(t, x):
        return np.broadcast_to(c, np.shape(x)).copy()

    b.bounded_by = float(np.linalg.norm(c))
    return b


def radial_drift(d: int, speed: float = 1.0):
    """``speed * x / |x|`` (zero at the origin)."""

    def b(t, x):
        r = _norm(x)[..., None]
        with np.errstate(invalid="ignore", divide="ignore"):
            out = speed * x / r
        return np.where(r > 0, out, 0.0)

    b.bounded_by = abs(speed)
    return b


def example21_drift(d: int, alpha: float, beta: float, sign: float = 1.0):
    """Radial drift of magnitude ``(|t|^-beta |x|^-alpha)^(1/(d+1))``.

    ``sign = +1`` points away from the origin.  The magnitude is infinite on
    ``t = 0`` and ``x = 0``; the engine's truncation removes those values.
    """
    h = example21_field(alpha, beta, d)

    def b(t, x):
        r = _norm(x)[..., None]
        mag = h(t, x)[..., None]
        with np.errstate(invalid="ignore", divide="ignore"):
            out = sign * mag * x / r
        return out

    b.magnitude = h
    return b


def example51_drift(d: int, alpha: float, beta: float):
    """``-(1-alpha)/(1+beta) |t|^-alpha |x|^-beta (x/|x|) sign(t)``."""
    c = (1.0 - alpha) / (1.0 + beta)

    def b(t, x):
        t = np.asarray(t, dtype=float)
        r = _norm(x)
        with np.errstate(invalid="ignore", divide="ignore"):
            mag = c * np.abs(t) ** (-alpha) * r ** (-beta - 1.0) * np.sign(t)
            out = -mag[..., None] * x
        return out

    return b


DRIFTS = {
    "zero": zero_drift,
    "constant": constant_drift,
    "radial": radial_drift,
    "example21": example21_drift,
    "example51": example51_drift,
}


def make_drift(name: str, d: int, **params):
    try:
        factory = DRIFTS[name]
    except KeyError:
        raise KeyError(f"unknown drift {name!r}; known: {sorted(DRIFTS)}") from None
    return factory(d, **params)


def make_sigma(name: str, d: int, **params):
    """Diffusion coefficients: ``identity`` or ``scaled`` (``scale * I``) or
    ``matrix`` (constant symmetric matrix ``value``)."""
    if name == "identity":
        return 1.0
    if name == "scaled":
        return float(params.get("scale", 1.0))
    if name == "matrix":
        m = np.asarray(params["value"], dtype=float).reshape(d, d)
        if not np.allclose(m, m.T):
            raise ValueError("sigma matrix must be symmetric")
        return m
    raise KeyError(f"unknown sigma {name!r}; known: identity, scaled, matrix")


# ---------------------------------------------------------------------------
# Test functions for path functionals


def cylinder_indicator(cyl: ParabolicCylinder):
    def f(t, x):
        return cyl.contains(t, x).astype(float)

    f.support = cyl.box()
    f.sup = 1.0
    f.cylinder = cyl
    return f


def gaussian_bump(center, width: float = 0.5, t_range=(0.0, 2.0), amplitude: float = 1.0):
    """``A exp(-|x - c|^2 / (2 w^2))`` on the time window ``t_range``."""
    c = np.asarray(center, dtype=float)
    lo, hi = t_range

    def f(t, x):
        t = np.asarray(t, dtype=float)
        r2 = np.sum((x - c) ** 2, axis=-1)
        return amplitude * np.exp(-r2 / (2 * width**2)) * ((t >= lo) & (t < hi))

    reach = 6.0 * width
    f.support = [(lo, hi)] + [(ci - reach, ci + reach) for ci in c]
    f.sup = amplitude
    return f


def constant_function(value: float = 1.0):
    def f(t, x):
        return np.full(np.shape(t), float(value))

    f.support = None
    f.sup = abs(value)
    return f


def time_function(g):
    """``f(t, x) = g(t)``."""

    def f(t, x):
        return np.asarray(g(np.asarray(t, dtype=float)), dtype=float)

    f.support = None
    return f


TEST_FUNCTIONS = {
    "cylinder": lambda d, R=1.0, t0=0.0, x0=None, tau=None: cylinder_indicator(
        ParabolicCylinder(t0, x0 if x0 is not None else [0.0] * d,
                          R * R if tau is None else tau, R)),
    "bump": lambda d, center=None, width=0.5, t_range=(0.0, 2.0), amplitude=1.0: gaussian_bump(
        center if center is not None else [0.0] * d, width, tuple(t_range), amplitude),
    "constant": lambda d, value=1.0: constant_function(value),
}


def make_test_function(name: str, d: int, **params):
    try:
        factory = TEST_FUNCTIONS[name]
    except KeyError:
        raise KeyError(f"unknown test function {name!r}; known: {sorted(TEST_FUNCTIONS)}") from None
    return factory(d, **params)


def sup_estimate(f, support, n: int = 4096, seed: int = 0) -> float:
    """Largest sampled |f| on a support box (used for tail bookkeeping)."""
    if getattr(f, "sup", None) is not None:
        return float(f.sup)
    rng = np.random.default_rng(seed)
    lo = np.array([b[0] for b in support])
    hi = np.array([b[1] for b in support])
    pts = lo + (hi - lo) * rng.random((n, len(support)))
    vals = np.abs(np.asarray(f(pts[:, 0], pts[:, 1:]), dtype=float))
    vals = vals[np.isfinite(vals)]
    return float(vals.max()) if vals.size else math.inf
