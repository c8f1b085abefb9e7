"""Parabolic cylinders, mixed-norm quadrature and drift admissibility.

Spacetime points are ``(t, x)`` with ``t`` scalar and ``x`` in R^d.  Grids
are tensor products whose axis 0 is time and axes 1..d are space; every
quadrature in this module is the midpoint rule on such a grid, optionally
graded dyadically toward a singular coordinate.

Callable fields follow one convention throughout the package: ``f(t, x)``
takes ``t`` of shape ``(n,)`` and ``x`` of shape ``(n, d)`` and returns an
array of shape ``(n,)`` (scalar field) or ``(n, m)`` (vector field).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "MixedNormSpec",
    "ParabolicCylinder",
    "TensorGrid",
    "GridFunction",
    "AdmissibilityReport",
    "SamplePlan",
    "ball_volume",
    "graded_edges",
    "mixed_norm",
    "dual_mixed_norm",
    "lebesgue_norm",
    "refine_until_stable",
    "certify_drift",
    "example21_field",
    "self_similar_rescale",
    "power_modulus",
]

Field = Callable[[np.ndarray, np.ndarray], np.ndarray]

# Evaluate callables on at most this many points at once.
_EVAL_BLOCK = 1 << 18


def _inv(p: float) -> float:
    return 0.0 if math.isinf(p) else 1.0 / p


def _conjugate(p: float) -> float:
    if p == 1.0:
        return math.inf
    if math.isinf(p):
        return 1.0
    return p / (p - 1.0)


def ball_volume(d: int, rho: float = 1.0) -> float:
    """Lebesgue measure of the d-dimensional ball of radius ``rho``."""
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1) * rho**d


@dataclass(frozen=True)
class MixedNormSpec:
    """Exponent pair for L_{p,q}: ``p`` acts on space, ``q`` on time."""

    p: float
    q: float
    d: int = 2

    def __post_init__(self):
        for name in ("p", "q"):
            v = float(getattr(self, name))
            if not (v >= 1.0):
                raise ValueError(f"exponent {name}={v} must lie in [1, inf]")
            object.__setattr__(self, name, v)
        if int(self.d) != self.d or self.d < 2:
            raise ValueError(f"dimension d={self.d} must be an integer >= 2")
        object.__setattr__(self, "d", int(self.d))

    @property
    def holder_defect(self) -> float:
        """``1 - d/p - 1/q``; zero exactly on the critical line."""
        return 1.0 - self.d * _inv(self.p) - _inv(self.q)

    def nu(self, d0: float | None = None) -> float:
        """``1 - d0/p - 1/q`` with ``d0`` defaulting to ``d``."""
        d0 = self.d if d0 is None else d0
        return 1.0 - d0 * _inv(self.p) - _inv(self.q)

    def is_critical(self, tol: float = 1e-12) -> bool:
        return abs(self.holder_defect) <= tol

    @property
    def conjugate(self) -> tuple[float, float]:
        return _conjugate(self.p), _conjugate(self.q)

    def to_dict(self) -> dict:
        return {"p": self.p, "q": self.q, "d": self.d}


@dataclass(frozen=True)
class ParabolicCylinder:
    """The set ``[t0, t0 + tau) x B_rho(x0)``."""

    t0: float
    x0: tuple
    tau: float
    rho: float

    def __post_init__(self):
        if not (self.tau > 0 and self.rho > 0):
            raise ValueError("cylinder needs tau > 0 and rho > 0")
        object.__setattr__(self, "x0", tuple(float(v) for v in np.atleast_1d(self.x0)))
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "tau", float(self.tau))
        object.__setattr__(self, "rho", float(self.rho))

    @classmethod
    def standard(cls, R: float, t0: float = 0.0, x0=(0.0, 0.0)) -> "ParabolicCylinder":
        """``C_R(t0, x0)``, the cylinder with ``tau = R**2``."""
        return cls(t0, x0, R * R, R)

    @property
    def d(self) -> int:
        return len(self.x0)

    @property
    def is_standard(self) -> bool:
        return math.isclose(self.tau, self.rho**2, rel_tol=1e-12)

    @property
    def radius(self) -> float:
        if not self.is_standard:
            raise ValueError("radius is defined for standard cylinders only")
        return self.rho

    def doubled(self) -> "ParabolicCylinder":
        if not self.is_standard:
            raise ValueError("doubling is defined for standard cylinders only")
        return ParabolicCylinder.standard(2 * self.rho, self.t0, self.x0)

    @property
    def volume(self) -> float:
        return self.tau * ball_volume(self.d, self.rho)

    def contains(self, t, x) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        x = np.asarray(x, dtype=float)
        s = t - self.t0
        r2 = np.sum((x - np.asarray(self.x0)) ** 2, axis=-1)
        return (s >= 0) & (s < self.tau) & (r2 < self.rho**2)

    def box(self) -> list[tuple[float, float]]:
        out = [(self.t0, self.t0 + self.tau)]
        out += [(c - self.rho, c + self.rho) for c in self.x0]
        return out

    def to_dict(self) -> dict:
        return {"t0": self.t0, "x0": list(self.x0), "tau": self.tau, "rho": self.rho}


def graded_edges(lo: float, hi: float, n: int, singular: float | None = None,
                 levels: int = 0) -> np.ndarray:
    """Cell edges on ``[lo, hi]``: ``n`` uniform cells plus dyadic edges
    ``singular +- w 2**-j`` (``j = 1..levels``, ``w`` the uniform width).

    ``singular`` itself becomes an edge, so no cell center coincides with it.
    """
    if not hi > lo or n < 1:
        raise ValueError("degenerate axis")
    edges = np.linspace(lo, hi, n + 1)
    if singular is None or levels <= 0 or not (lo <= singular <= hi):
        return edges
    w = (hi - lo) / n
    fracs = w * 2.0 ** -np.arange(1, levels + 1)
    pts = np.concatenate([edges, [singular], singular - fracs, singular + fracs])
    pts = np.unique(pts[(pts >= lo) & (pts <= hi)])
    # drop slivers created next to lattice edges
    keep = np.concatenate([[True], np.diff(pts) > 1e-13 * w])
    pts = pts[keep]
    pts[-1] = hi
    return pts


class TensorGrid:
    """Tensor grid; axis 0 is time, axes 1..d are space."""

    def __init__(self, edges: Sequence[np.ndarray]):
        self.edges = [np.asarray(e, dtype=float) for e in edges]
        for e in self.edges:
            if e.ndim != 1 or e.size < 2 or np.any(np.diff(e) <= 0):
                raise ValueError("edges must be strictly increasing with >= 2 entries")

    @classmethod
    def uniform(cls, box: Sequence[tuple[float, float]], resolution: Sequence[int]) -> "TensorGrid":
        if len(box) != len(resolution):
            raise ValueError("box and resolution disagree in length")
        return cls([np.linspace(lo, hi, int(n) + 1) for (lo, hi), n in zip(box, resolution)])

    @classmethod
    def graded(cls, box, resolution, singular=None, levels: int = 0) -> "TensorGrid":
        """Uniform grid refined toward ``singular`` (a per-axis sequence whose
        entries may be ``None``)."""
        singular = singular if singular is not None else [None] * len(box)
        return cls([graded_edges(lo, hi, int(n), s, levels)
                    for (lo, hi), n, s in zip(box, resolution, singular)])

    @property
    def ndim(self) -> int:
        return len(self.edges)

    @property
    def d(self) -> int:
        return self.ndim - 1

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(e.size - 1 for e in self.edges)

    @property
    def box(self) -> list[tuple[float, float]]:
        return [(float(e[0]), float(e[-1])) for e in self.edges]

    @property
    def centers(self) -> list[np.ndarray]:
        return [0.5 * (e[1:] + e[:-1]) for e in self.edges]

    @property
    def widths(self) -> list[np.ndarray]:
        return [np.diff(e) for e in self.edges]

    def is_uniform(self) -> bool:
        return all(np.allclose(w, w[0], rtol=1e-12, atol=0) for w in self.widths)

    def spatial_volumes(self) -> np.ndarray:
        vol = np.ones(())
        for w in self.widths[1:]:
            vol = np.multiply.outer(vol, w)
        return vol

    def center_points(self) -> tuple[np.ndarray, np.ndarray]:
        """Flattened cell centers as ``(t, x)`` in C order."""
        mesh = np.meshgrid(*self.centers, indexing="ij")
        t = mesh[0].ravel()
        x = np.stack([m.ravel() for m in mesh[1:]], axis=-1)
        return t, x

    def coarsen(self, factors: Sequence[int]) -> "TensorGrid":
        out = []
        for e, k in zip(self.edges, factors):
            n = e.size - 1
            if n % k:
                raise ValueError(f"axis with {n} cells cannot be coarsened by {k}")
            out.append(e[::k])
        return TensorGrid(out)


def _sample(f: Field, grid: TensorGrid) -> np.ndarray:
    t, x = grid.center_points()
    parts = []
    for i in range(0, t.size, _EVAL_BLOCK):
        parts.append(np.asarray(f(t[i:i + _EVAL_BLOCK], x[i:i + _EVAL_BLOCK]), dtype=float))
    vals = np.concatenate(parts, axis=0)
    return vals.reshape(grid.shape + vals.shape[1:])


@dataclass
class GridFunction:
    """Samples of a scalar or vector field at the cell centers of a grid."""

    grid: TensorGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        shp = self.grid.shape
        if self.values.shape[: len(shp)] != shp or self.values.ndim > len(shp) + 1:
            raise ValueError(
                f"values of shape {self.values.shape} do not match grid {shp}"
            )

    @classmethod
    def from_callable(cls, f: Field, grid: TensorGrid) -> "GridFunction":
        return cls(grid, _sample(f, grid))

    @property
    def box(self):
        return self.grid.box

    @property
    def resolution(self):
        return self.grid.shape

    @property
    def components(self) -> int:
        return 1 if self.values.ndim == self.grid.ndim else self.values.shape[-1]

    def magnitude(self) -> np.ndarray:
        if self.components == 1 and self.values.ndim == self.grid.ndim:
            return np.abs(self.values)
        return np.sqrt(np.sum(self.values**2, axis=-1))

    # Serialization: one JSON header line, then the payload.
    def _header(self) -> dict:
        head = {"box": self.box, "resolution": list(self.resolution),
                "components": self.components}
        if not self.grid.is_uniform():
            head["edges"] = [e.tolist() for e in self.grid.edges]
        return head

    def save(self, path, fmt: str = "csv") -> None:
        head = json.dumps(self._header())
        flat = self.values.reshape(-1, self.components)
        if fmt == "csv":
            with open(path, "w", encoding="ascii") as fh:
                fh.write("# " + head + "\n")
                for row in flat:
                    fh.write(",".join(repr(float(v)) for v in row) + "\n")
        elif fmt == "bin":
            with open(path, "wb") as fh:
                fh.write((head + "\n").encode("ascii"))
                fh.write(flat.astype("<f8").tobytes())
        else:
            raise ValueError(f"unknown format {fmt!r}")

    @classmethod
    def load(cls, path) -> "GridFunction":
        with open(path, "rb") as fh:
            first = fh.readline().decode("ascii")
            rest = fh.read()
        if first.startswith("# "):
            head = json.loads(first[2:])
            rows = [line.split(",") for line in rest.decode("ascii").splitlines() if line]
            flat = np.array(rows, dtype=float)
        else:
            head = json.loads(first)
            flat = np.frombuffer(rest, dtype="<f8").reshape(-1, head["components"])
        if "edges" in head:
            grid = TensorGrid([np.array(e) for e in head["edges"]])
        else:
            grid = TensorGrid.uniform(head["box"], head["resolution"])
        shape = tuple(head["resolution"])
        vals = flat.reshape(shape) if head["components"] == 1 else flat.reshape(
            shape + (head["components"],))
        return cls(grid, vals)


# ---------------------------------------------------------------------------
# Norms


def _region_mask(region, grid: TensorGrid) -> np.ndarray:
    if region is None:
        return np.ones(grid.shape, dtype=bool)
    if isinstance(region, ParabolicCylinder):
        t, x = grid.center_points()
        return region.contains(t, x).reshape(grid.shape)
    if callable(region):
        t, x = grid.center_points()
        return np.asarray(region(t, x), dtype=bool).reshape(grid.shape)
    # a box
    mask = np.ones(grid.shape, dtype=bool)
    for ax, ((lo, hi), c) in enumerate(zip(region, grid.centers)):
        sl = (c >= lo) & (c < hi)
        shp = [1] * grid.ndim
        shp[ax] = -1
        mask &= sl.reshape(shp)
    return mask


def _region_box(region):
    if isinstance(region, ParabolicCylinder):
        return region.box()
    if region is None or callable(region):
        raise ValueError("a box or cylinder region is needed to sample a callable field")
    return [tuple(map(float, b)) for b in region]


def _iterated(a: np.ndarray, grid: TensorGrid, inner: str, p_inner: float,
              p_outer: float) -> float:
    """Iterated norm of the nonnegative array ``a`` (shape ``grid.shape``).

    ``inner='x'`` integrates space first with exponent ``p_inner`` then time
    with ``p_outer``; ``inner='t'`` the other way around.
    """
    scale = float(np.max(a)) if a.size else 0.0
    if scale == 0.0:
        return 0.0
    a = a / scale
    dt = grid.widths[0]
    dvx = grid.spatial_volumes()
    space_axes = tuple(range(1, grid.ndim))
    if inner == "x":
        if math.isinf(p_inner):
            s = np.max(a, axis=space_axes)
            s_pow = s  # already a norm
        else:
            s_pow = np.sum(a**p_inner * dvx, axis=space_axes) ** (1.0 / p_inner)
        if math.isinf(p_outer):
            out = float(np.max(s_pow))
        else:
            out = float(np.sum(s_pow**p_outer * dt) ** (1.0 / p_outer))
    else:
        if math.isinf(p_inner):
            s_pow = np.max(a, axis=0)
        else:
            s_pow = np.tensordot(dt, a**p_inner, axes=(0, 0)) ** (1.0 / p_inner)
        if math.isinf(p_outer):
            out = float(np.max(s_pow))
        else:
            out = float(np.sum(s_pow**p_outer * dvx) ** (1.0 / p_outer))
    return out * scale


def _as_magnitude(f, spec: MixedNormSpec, region, resolution, grid, singular, levels):
    if isinstance(f, GridFunction):
        g = f.grid
        mag = f.magnitude()
    else:
        if grid is None:
            box = _region_box(region)
            if resolution is None:
                raise ValueError("resolution is required to sample a callable field")
            if np.isscalar(resolution):
                resolution = [int(resolution)] * len(box)
            grid = TensorGrid.graded(box, resolution, singular, levels)
        g = grid
        vals = _sample(f, g)
        mag = np.abs(vals) if vals.ndim == g.ndim else np.sqrt(np.sum(vals**2, axis=-1))
    if g.d != spec.d:
        raise ValueError(f"grid has d={g.d} but norm spec has d={spec.d}")
    if not np.all(np.isfinite(mag)):
        raise ValueError("field has non-finite samples on the quadrature grid")
    mask = _region_mask(region, g)
    if not mask.any():
        raise ValueError("region does not overlap the field's grid")
    return np.where(mask, mag, 0.0), g


def mixed_norm(f, spec: MixedNormSpec, region=None, resolution=None, grid=None,
               singular=None, levels: int = 0) -> float:
    """Midpoint-rule L_{p,q} norm of ``f`` over ``region``.

    Parameters
    ----------
    f : GridFunction or callable
        Field to measure.  Vector fields are measured by their Euclidean
        length.
    spec : MixedNormSpec
        Exponents.  For ``p >= q`` the space integral is taken first,
        otherwise the time integral.  Infinite exponents become suprema over
        the sampled cells, which are lower bounds on essential suprema.
    region : ParabolicCylinder, box or predicate, optional
        Integration domain; cells whose centers fall outside are dropped.
    resolution : int or sequence of int, optional
        Cells per axis when ``f`` is callable (sampled on the region's box).
    grid : TensorGrid, optional
        Explicit sampling grid for a callable ``f``.
    singular, levels
        Per-axis coordinates toward which the sampling grid is graded
        dyadically, and the number of dyadic levels.
    """
    mag, g = _as_magnitude(f, spec, region, resolution, grid, singular, levels)
    if spec.p >= spec.q:
        return _iterated(mag, g, "x", spec.p, spec.q)
    return _iterated(mag, g, "t", spec.q, spec.p)


def dual_mixed_norm(f, spec: MixedNormSpec, region=None, resolution=None, grid=None,
                    singular=None, levels: int = 0) -> float:
    """L'_{p,q} norm: conjugate exponents, branch chosen by the original p vs q."""
    pc, qc = spec.conjugate
    mag, g = _as_magnitude(f, spec, region, resolution, grid, singular, levels)
    if spec.p >= spec.q:
        return _iterated(mag, g, "x", pc, qc)
    return _iterated(mag, g, "t", qc, pc)


def lebesgue_norm(values: np.ndarray, volumes, p: float) -> float:
    """Plain L_p norm of piecewise-constant data with the given cell volumes."""
    a = np.abs(np.asarray(values, dtype=float))
    if math.isinf(p):
        return float(np.max(a)) if a.size else 0.0
    scale = float(np.max(a)) if a.size else 0.0
    if scale == 0.0:
        return 0.0
    return float(np.sum((a / scale) ** p * volumes) ** (1.0 / p)) * scale


def refine_until_stable(compute: Callable[[int], float], start: int = 4, step: int = 4,
                        rtol: float = 1e-4, max_levels: int = 64) -> tuple[float, int, list]:
    """Increase the dyadic level until two successive values agree to ``rtol``.

    Returns ``(value, levels, history)``; when ``max_levels`` is reached the
    last value is returned and the history shows the trend.
    """
    history = []
    level = start
    prev = compute(level)
    history.append((level, prev))
    while level + step <= max_levels:
        level += step
        cur = compute(level)
        history.append((level, cur))
        if abs(cur - prev) <= rtol * max(abs(cur), 1e-300):
            return cur, level, history
        prev = cur
    return prev, level, history


# ---------------------------------------------------------------------------
# Drift admissibility


@dataclass(frozen=True)
class SamplePlan:
    """Cylinders ``C_{tau,rho}(t, x)`` probed by :func:`certify_drift`.

    Radii are log-uniform on ``[rho_min, rho_max]``, ``tau = theta * rho**2``
    for each ``theta`` in ``thetas`` and bases run over the product of
    ``base_times`` and ``base_points``.
    """

    rho_min: float = 0.1
    rho_max: float = 1.0
    n_rho: int = 3
    thetas: tuple = (0.25, 0.5, 1.0)
    base_times: tuple = (0.0,)
    base_points: tuple = ((0.0, 0.0),)
    resolution: int = 12
    levels: int = 24
    singular: tuple | None = None

    def radii(self) -> np.ndarray:
        if self.n_rho == 1:
            return np.array([self.rho_max])
        return np.geomspace(self.rho_min, self.rho_max, self.n_rho)

    def cylinders(self):
        for rho in self.radii():
            for th in self.thetas:
                for t in self.base_times:
                    for x in self.base_points:
                        yield ParabolicCylinder(t, x, th * rho * rho, rho)

    def refined(self) -> "SamplePlan":
        th = np.asarray(self.thetas, dtype=float)
        mids = 0.5 * (th[1:] + th[:-1])
        new_th = tuple(np.unique(np.concatenate([th, mids])).tolist())
        return SamplePlan(self.rho_min, self.rho_max, 2 * self.n_rho - 1, new_th,
                          self.base_times, self.base_points, self.resolution,
                          self.levels, self.singular)

    def scaled(self, R: float) -> "SamplePlan":
        """Plan seen through ``(t, x) -> (t / R**2, x / R)``."""
        return SamplePlan(self.rho_min / R, self.rho_max / R, self.n_rho, self.thetas,
                          tuple(t / R**2 for t in self.base_times),
                          tuple(tuple(np.asarray(x) / R) for x in self.base_points),
                          self.resolution, self.levels,
                          None if self.singular is None else
                          (self.singular[0] / R**2,) + tuple(np.asarray(self.singular[1:]) / R))


@dataclass
class AdmissibilityReport:
    Hbar_hat: float
    worst_cylinder: ParabolicCylinder | None
    samples: int
    W_id: str
    refined_Hbar_hat: float | None = None
    stable: bool = True
    ratios: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "Hbar_hat": self.Hbar_hat,
            "worst_cylinder": None if self.worst_cylinder is None else self.worst_cylinder.to_dict(),
            "samples": self.samples,
            "W_id": self.W_id,
            "refined_Hbar_hat": self.refined_Hbar_hat,
            "stable": self.stable,
        }


def power_modulus(exponent: float) -> Callable[[float], float]:
    """``W(theta) = theta**exponent``; satisfies W(0)=0, W(1)=1."""
    if exponent <= 0:
        raise ValueError("modulus exponent must be positive")

    def W(theta):
        return np.asarray(theta, dtype=float) ** exponent

    W.__name__ = f"theta^{exponent:g}"
    return W


def _plan_ratios(h, W, plan: SamplePlan, p0: float, q0: float, d: int):
    spec = MixedNormSpec(p0, q0, d)
    ratios = []
    for cyl in plan.cylinders():
        sing = None
        if plan.singular is not None:
            sing = list(plan.singular)
        n = mixed_norm(h, spec, region=cyl, resolution=plan.resolution,
                       singular=sing, levels=plan.levels if sing is not None else 0)
        theta = cyl.tau / cyl.rho**2
        ratios.append((n**q0 / (cyl.rho * float(W(theta))), cyl))
    return ratios


def certify_drift(h, W, sample_plan: SamplePlan, p0: float | None = None,
                  q0: float | None = None, d: int | None = None,
                  stability_rtol: float = 0.1) -> AdmissibilityReport:
    """Empirical smallest constant in ``||h||^{q0}_{L_{p0,q0}(C)} <= H rho W(tau/rho^2)``.

    The constant is the maximum ratio over the cylinders of ``sample_plan``;
    the plan is then refined once and the report is marked unstable when the
    maximum moves by more than ``stability_rtol``.
    """
    if abs(float(W(0.0))) > 1e-12 or abs(float(W(1.0)) - 1.0) > 1e-12:
        raise ValueError("invalid modulus: need W(0) = 0 and W(1) = 1")
    d = d if d is not None else len(sample_plan.base_points[0])
    p0 = float(d + 1) if p0 is None else p0
    q0 = float(d + 1) if q0 is None else q0
    ratios = _plan_ratios(h, W, sample_plan, p0, q0, d)
    best, worst = max(ratios, key=lambda r: r[0])
    refined = _plan_ratios(h, W, sample_plan.refined(), p0, q0, d)
    rbest = max(r[0] for r in refined)
    stable = abs(rbest - best) <= stability_rtol * max(rbest, 1e-300)
    return AdmissibilityReport(
        Hbar_hat=float(max(best, rbest)),
        worst_cylinder=worst if best >= rbest else max(refined, key=lambda r: r[0])[1],
        samples=len(ratios) + len(refined),
        W_id=getattr(W, "__name__", "W"),
        refined_Hbar_hat=float(rbest),
        stable=bool(stable),
        ratios=[r[0] for r in ratios],
    )


# ---------------------------------------------------------------------------
# Singular fields and parabolic scaling


def example21_field(alpha: float, beta: float, d: int = 2, power: float | None = None) -> Field:
    """``h = g**(1/(d+1))`` with ``g(t, x) = |t|**-beta * |x|**-alpha``.

    Requires ``alpha + 2 beta = d + 1``, ``alpha in (0, d)``, ``beta in (0, 1)``.
    The returned field is ``+inf`` on ``t = 0`` and on ``x = 0``.  Passing
    ``power`` returns ``g**power`` instead (``power=1`` gives ``g``).
    """
    if not (0 < alpha < d and 0 < beta < 1):
        raise ValueError("need alpha in (0, d) and beta in (0, 1)")
    if abs(alpha + 2 * beta - (d + 1)) > 1e-12:
        raise ValueError(f"alpha + 2 beta = {alpha + 2 * beta} but must equal d + 1 = {d + 1}")
    e = 1.0 / (d + 1) if power is None else float(power)

    def h(t, x):
        t = np.abs(np.asarray(t, dtype=float))
        r = np.sqrt(np.sum(np.asarray(x, dtype=float) ** 2, axis=-1))
        with np.errstate(divide="ignore"):
            return (t ** (-beta * e)) * (r ** (-alpha * e))

    h.alpha, h.beta, h.d = alpha, beta, d
    h.exponent = e
    return h


def self_similar_rescale(obj, R: float, drift: bool = False):
    """Parabolic rescaling ``t -> t / R**2``, ``x -> x / R``.

    Fields become ``(t, x) -> obj(R**2 t, R x)``, multiplied by ``R`` when
    ``drift`` is set.  Path samples (objects with ``states``, ``t0`` and
    ``step``) have their coordinates divided accordingly.
    """
    if not R > 0:
        raise ValueError("scale R must be positive")
    if hasattr(obj, "states") and hasattr(obj, "step"):
        from dataclasses import replace

        return replace(obj, t0=obj.t0 / R**2, x0=np.asarray(obj.x0) / R,
                       step=obj.step / R**2, states=np.asarray(obj.states) / R)
    if not callable(obj):
        raise TypeError("expected a callable field or a path sample")
    factor = R if drift else 1.0

    def rescaled(t, x):
        return factor * np.asarray(obj(R * R * np.asarray(t), R * np.asarray(x)))

    return rescaled
