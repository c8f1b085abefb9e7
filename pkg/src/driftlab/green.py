"""Empirical Green's functions from discounted occupation histograms.

``G_lam`` is the density of ``A -> E int_0^inf e^{-lam t} 1_A(t, x_t) dt`` on
spacetime and ``g_lam`` its spatial marginal.  Both are estimated by
piecewise-constant histograms (see :class:`driftlab.functionals.Occupation`
for the quadrature), so pairing a histogram with a binned function gives
back the path functional of that function exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .engine import PathBatch, drive, run_batch
from .functionals import Occupation, discount_weights, mean_se
from .geometry import MixedNormSpec, ParabolicCylinder, TensorGrid, GridFunction, \
    dual_mixed_norm, lebesgue_norm
from .rng import auxiliary_generator, derive_seed

__all__ = [
    "OccupationHistogram",
    "Ball",
    "GehringReport",
    "estimate_G",
    "estimate_g",
    "estimate_histograms",
    "dual_norm_check",
    "reverse_holder_ratio",
    "gehring_sweep",
    "integrability_exponent_probe",
    "parabolic_edges",
    "spatial_kernel",
    "BinnedFunctionals",
    "pairing_check",
]

# Relative growth under 2x refinement above which a norm counts as unresolved.
REFINE_TOL = 0.25


@dataclass
class OccupationHistogram:
    """Density of the discounted occupation measure on a tensor partition.

    ``weights`` are mass per path per unit volume; ``overflow`` is the mass
    per path that fell outside the box.  ``spatial`` histograms have only
    space axes.
    """

    edges: list
    weights: np.ndarray
    lam: float
    n_paths: int
    h: float
    seed: int
    spatial: bool = False
    overflow: float = 0.0
    group_weights: np.ndarray | None = field(default=None, repr=False)

    @property
    def shape(self) -> tuple:
        return tuple(len(e) - 1 for e in self.edges)

    @property
    def box(self) -> list:
        return [(float(e[0]), float(e[-1])) for e in self.edges]

    @property
    def d(self) -> int:
        return len(self.edges) - (0 if self.spatial else 1)

    def volumes(self) -> np.ndarray:
        vol = np.ones(())
        for e in self.edges:
            vol = np.multiply.outer(vol, np.diff(e))
        return vol

    def centers(self) -> list[np.ndarray]:
        return [0.5 * (np.asarray(e[1:]) + np.asarray(e[:-1])) for e in self.edges]

    def center_points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.centers(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def masses(self) -> np.ndarray:
        return self.weights * self.volumes()

    def total_mass(self, include_overflow: bool = True) -> float:
        return float(self.masses().sum() + (self.overflow if include_overflow else 0.0))

    def pair(self, f: Callable) -> float:
        """``<f, G>`` for ``f`` evaluated at bin centers (a binned function)."""
        return float(np.sum(self._at_centers(f) * self.masses()))

    def _at_centers(self, f: Callable) -> np.ndarray:
        pts = self.center_points()
        if self.spatial:
            vals = np.asarray(f(pts), dtype=float)
        else:
            vals = np.asarray(f(pts[:, 0], pts[:, 1:]), dtype=float)
        return vals.reshape(self.shape)

    def grid(self) -> TensorGrid:
        if self.spatial:
            raise ValueError("spatial histograms have no time axis")
        return TensorGrid(self.edges)

    def coarsen(self, factor: int = 2) -> "OccupationHistogram":
        """Merge ``factor`` bins per axis (masses add)."""
        m = self.masses()
        for ax, n in enumerate(self.shape):
            if n % factor:
                raise ValueError(f"axis {ax} with {n} bins cannot be coarsened by {factor}")
            shp = list(m.shape)
            shp[ax:ax + 1] = [n // factor, factor]
            m = m.reshape(shp).sum(axis=ax + 1)
        edges = [np.asarray(e)[::factor] for e in self.edges]
        vol = np.ones(())
        for e in edges:
            vol = np.multiply.outer(vol, np.diff(e))
        return OccupationHistogram(edges, m / vol, self.lam, self.n_paths, self.h, self.seed,
                                   self.spatial, self.overflow)

    def header(self) -> dict:
        return {"box": self.box, "bins": list(self.shape), "lambda": self.lam,
                "n_paths": self.n_paths, "h": self.h, "seed": self.seed,
                "spatial": self.spatial, "overflow": self.overflow}

    def save(self, path) -> None:
        """One JSON header line followed by the flat weights, one per line."""
        with open(path, "w", encoding="ascii") as fh:
            fh.write(json.dumps(self.header()) + "\n")
            for v in self.weights.ravel():
                fh.write(format(float(v), ".17g") + "\n")

    @classmethod
    def load(cls, path) -> "OccupationHistogram":
        with open(path, encoding="ascii") as fh:
            head = json.loads(fh.readline())
            vals = np.array([float(line) for line in fh if line.strip()])
        edges = [np.linspace(lo, hi, n + 1) for (lo, hi), n in zip(head["box"], head["bins"])]
        return cls(edges, vals.reshape(head["bins"]), head["lambda"], head["n_paths"],
                   head["h"], head["seed"], head["spatial"], head["overflow"])


def parabolic_edges(t_range: tuple[float, float], x_half: float, dx: float, d: int,
                    center=None) -> list[np.ndarray]:
    """Uniform edges with ``dt = dx**2`` on ``t_range x prod [c - x_half, c + x_half]``."""
    center = np.zeros(d) if center is None else np.asarray(center, dtype=float)
    nx = int(round(2 * x_half / dx))
    nt = int(round((t_range[1] - t_range[0]) / dx**2))
    edges = [t_range[0] + dx**2 * np.arange(nt + 1)]
    edges += [c - x_half + dx * np.arange(nx + 1) for c in center]
    return edges


def _to_hist(occ: Occupation, j: int, batch: PathBatch, spatial: bool) -> OccupationHistogram:
    groups = None
    if occ.groups > 1:
        groups = np.stack([occ.density(j, g) for g in range(occ.groups)])
    return OccupationHistogram(occ.edges, occ.density(j), occ.lambdas[j], batch.n_paths,
                               batch.step, batch.base_seed, spatial, occ.overflow(j), groups)


def estimate_histograms(batch: PathBatch, lambdas: Sequence[float], bins, spatial: bool = False,
                        groups: int = 1, stop=None, extra_observers: Sequence = ()) -> list:
    """Histograms for several discounts (and optionally several binnings:
    pass a list of edge lists as ``bins``) from a single pass over ``batch``.

    Returns a list indexed ``[binning][lambda]`` when several binnings are
    given, else ``[lambda]``.  With several binnings, ``lambdas`` may also be
    a list of per-binning lists.
    """
    many = isinstance(bins, (list, tuple)) and len(bins) > 0 and \
        all(isinstance(b, (TensorGrid, list, tuple)) for b in bins)
    binnings = list(bins) if many else [bins]
    nested = many and len(lambdas) == len(binnings) and \
        all(isinstance(v, (list, tuple)) for v in lambdas)
    occs = []
    for i, b in enumerate(binnings):
        edges = b.edges if isinstance(b, TensorGrid) else b
        lams = lambdas[i] if nested else lambdas
        occs.append(Occupation(edges, lams, batch.n_paths, spatial, groups))
    drive(batch, stop=stop, observers=list(occs) + list(extra_observers))
    out = [[_to_hist(o, j, batch, spatial) for j in range(len(o.lambdas))] for o in occs]
    return out if many else out[0]


def estimate_G(batch: PathBatch, lam: float, bins, groups: int = 1) -> OccupationHistogram:
    """Spacetime histogram of ``G_lam`` (bins: edge list or TensorGrid)."""
    return estimate_histograms(batch, [lam], bins, False, groups)[0]


def estimate_g(batch: PathBatch, lam: float, spatial_bins, groups: int = 1) -> OccupationHistogram:
    """Spatial histogram of ``g_lam``."""
    return estimate_histograms(batch, [lam], spatial_bins, True, groups)[0]


def spatial_kernel(lam: float, d: int = 3) -> Callable:
    """Resolvent kernel of ``(1/2) Laplacian`` in three dimensions,
    ``(2 pi |x|)^{-1} exp(-sqrt(2 lam) |x|)``."""
    if d != 3:
        raise ValueError("closed form implemented for d = 3")
    k = math.sqrt(2 * lam)

    def g(x):
        r = np.sqrt(np.sum(np.asarray(x) ** 2, axis=-1))
        with np.errstate(divide="ignore"):
            return np.exp(-k * r) / (2 * math.pi * r)

    return g


class BinnedFunctionals:
    """Per-path ``int_0^T e^{-lam t} f_j(t, x_t) dt`` for functions that are
    constant on the cells of ``edges`` (``coef[j]`` flat over the cells, zero
    outside the box).  Cells are located by ``searchsorted``, independently of
    :class:`~driftlab.functionals.Occupation`."""

    def __init__(self, edges: Sequence[np.ndarray], coef: np.ndarray, lam: float, n_paths: int):
        self.edges = [np.asarray(e, dtype=float) for e in edges]
        self.coef = np.asarray(coef, dtype=float)
        self._rows = np.ascontiguousarray(self.coef.T)
        self.lam = float(lam)
        self.shape = tuple(e.size - 1 for e in self.edges)
        self.result = np.zeros((n_paths, self.coef.shape[0]))

    def update(self, ch) -> None:
        C = ch.n_intervals
        t = ch.times()[:C]
        e0 = self.edges[0]
        sel = ch.live & (t >= e0[0]) & (t < e0[-1])
        # path-major order so each path's points are contiguous
        cols, rows = np.nonzero(sel.T)
        if rows.size == 0:
            return
        coords = np.concatenate([t[rows, cols][:, None], ch.states[rows, cols]], axis=1)
        flat = np.zeros(rows.size, dtype=np.int64)
        inside = np.ones(rows.size, dtype=bool)
        for ax, e in enumerate(self.edges):
            j = np.searchsorted(e, coords[:, ax], side="right") - 1
            inside &= (j >= 0) & (j < e.size - 1)
            flat = flat * (e.size - 1) + np.clip(j, 0, e.size - 2)
        w = discount_weights(self.lam, ch.h, ch.k0 + rows)
        rows, cols, flat, w = rows[inside], cols[inside], flat[inside], w[inside]
        if rows.size == 0:
            return
        vals = self._rows[flat] * w[:, None]
        starts = np.flatnonzero(np.r_[True, cols[1:] != cols[:-1]])
        self.result[ch.ids[cols[starts]]] += np.add.reduceat(vals, starts, axis=0)

    def finalize(self, res) -> None:
        pass


def pairing_check(batch: PathBatch, lam: float, edges: Sequence[np.ndarray],
                  n_functions: int = 20, seed: int = 0) -> dict:
    """``<1, G_lam>`` and ``<f_j, G_lam>`` against direct path functionals.

    The ``f_j`` are random nonnegative binned functions on ``edges``.  One
    pass over ``batch`` feeds both the histogram and the direct functionals.
    ``mass_remainder = e^{-lam T}`` is the discount mass beyond the horizon.
    """
    rng = auxiliary_generator(seed, "pairing")
    shape = tuple(len(e) - 1 for e in edges)
    coef = rng.random((n_functions, int(np.prod(shape))))
    direct = BinnedFunctionals(edges, coef, lam, batch.n_paths)
    G = estimate_histograms(batch, [lam], edges, extra_observers=[direct])[0]
    m, se = mean_se(direct.result)
    paired = np.array([float(np.sum(c.reshape(shape) * G.masses())) for c in coef])
    z = np.abs(paired - m) / np.where(se > 0, se, np.inf)
    T = batch.n_steps * batch.step
    remainder = math.exp(-lam * T)
    mass = G.total_mass()
    # the mass of an unstopped path is deterministic, so its SE is 0
    return {"total_mass": mass, "mass_error": abs(mass - 1.0), "mass_remainder": remainder,
            "mass_ok": bool(abs(mass - 1.0) <= remainder + 1e-12),
            "paired": paired.tolist(), "direct": m.tolist(), "direct_se": se.tolist(),
            "z": z.tolist(), "max_z": float(np.max(z)), "pairs_ok": bool(np.all(z <= 3.0)),
            "max_abs_diff": float(np.max(np.abs(paired - m))), "histogram": G}


# ---------------------------------------------------------------------------
# Dual norms


def _weighted_dual(G: OccupationHistogram, norm_spec: MixedNormSpec, theta: float | None,
                   nu: float, origin) -> float:
    if G.spatial:
        w = G.weights
        if theta is not None:
            x0 = np.zeros(G.d) if origin is None else np.asarray(origin[1])
            pts = G.center_points() - x0
            r = np.sqrt(np.sum(pts**2, axis=-1)).reshape(G.shape)
            # Psi_lam^{-d/p}
            w = w * np.exp(math.sqrt(G.lam) * r * theta / 32 * G.d / norm_spec.p)
        pc = norm_spec.p / (norm_spec.p - 1) if norm_spec.p > 1 else math.inf
        return lebesgue_norm(w, G.volumes(), pc)
    vals = G.weights
    if theta is not None:
        t0, x0 = (0.0, np.zeros(G.d)) if origin is None else (origin[0], np.asarray(origin[1]))
        pts = G.center_points()
        r = np.sqrt(np.sum((pts[:, 1:] - x0) ** 2, axis=-1))
        s = np.sqrt(np.maximum(pts[:, 0] - t0, 0.0))
        # Phi_lam^{nu - 1}
        vals = vals * np.exp((1 - nu) * math.sqrt(G.lam) * (r + s) * theta / 32).reshape(G.shape)
    return dual_mixed_norm(GridFunction(G.grid(), vals), norm_spec)


def dual_norm_check(G: OccupationHistogram, norm_spec: MixedNormSpec, theta_hat: float | None,
                    d0: float | None = None, origin=None) -> dict:
    """Weighted dual norm of a histogram and its refinement delta.

    Spacetime: ``||Phi_lam^{nu-1} G||_{L'_{p,q}}`` with bound scale
    ``lam^{-nu - d/(2p)}``.  Spatial: ``||Psi_lam^{-d/p} g||_{L_{p'}}`` with
    bound scale ``lam^{-1 + d/(2p)}``.  ``theta_hat=None`` drops the weight.
    The histogram is compared with its 2x coarsening; growth above 25% marks
    the value as an unresolved singularity.
    """
    d0 = G.d if d0 is None else d0
    nu = norm_spec.nu(d0)
    fine = _weighted_dual(G, norm_spec, theta_hat, nu, origin)
    coarse = _weighted_dual(G.coarsen(2), norm_spec, theta_hat, nu, origin)
    growth = fine / coarse - 1.0 if coarse > 0 else math.inf
    if G.spatial:
        scale = G.lam ** (-1 + G.d / (2 * norm_spec.p))
    else:
        scale = G.lam ** (-nu - G.d / (2 * norm_spec.p))
    return {"dual_norm": fine, "coarse_norm": coarse, "refinement_growth": growth,
            "stable": bool(growth <= REFINE_TOL), "bound_ratio": fine / scale,
            "lambda": G.lam, "nu": nu, "theta_hat": theta_hat}


# ---------------------------------------------------------------------------
# Reverse Hoelder diagnostics


@dataclass(frozen=True)
class Ball:
    center: tuple
    R: float

    def doubled(self) -> "Ball":
        return Ball(self.center, 2 * self.R)

    def contains(self, x) -> np.ndarray:
        return np.sum((np.asarray(x) - np.asarray(self.center)) ** 2, axis=-1) < self.R**2


def _mask(G: OccupationHistogram, region) -> np.ndarray:
    pts = G.center_points()
    if isinstance(region, ParabolicCylinder):
        m = region.contains(pts[:, 0], pts[:, 1:])
    else:
        m = region.contains(pts)
    return m.reshape(G.shape)


def _inside_box(G: OccupationHistogram, region) -> bool:
    box = G.box
    if isinstance(region, ParabolicCylinder):
        want = region.box()
    else:
        want = [(c - region.R, c + region.R) for c in region.center]
    tol = 1e-12
    return all(lo >= blo - tol and hi <= bhi + tol for (lo, hi), (blo, bhi) in zip(want, box))


def reverse_holder_ratio(G: OccupationHistogram, Q, p: float) -> dict:
    """``r = (avg_Q G^{p'})^{1/p'} / avg_{2Q} G`` with ``p' = p/(p-1)``.

    ``Q`` is a standard :class:`ParabolicCylinder` (spacetime histograms) or
    a :class:`Ball` (spatial ones); a bin belongs to a set when its center
    does.  Also returns the power-mean floor ``avg_Q G / avg_{2Q} G``.
    """
    if p <= 1:
        raise ValueError("p must exceed 1")
    Q2 = Q.doubled()
    if not _inside_box(G, Q2):
        raise ValueError("the doubled set leaves the histogram box")
    pc = p / (p - 1)
    vol = np.broadcast_to(G.volumes(), G.shape)
    mq, m2 = _mask(G, Q), _mask(G, Q2)
    if not mq.any():
        raise ValueError("no bin center inside Q; refine the histogram")
    vq = vol[mq]
    gq = G.weights[mq]
    avg_q = float(np.sum(gq * vq) / vq.sum())
    top = float(np.max(gq))
    pm = top * float(np.sum((gq / top) ** pc * vq) / vq.sum()) ** (1 / pc) if top > 0 else 0.0
    avg_2q = float(np.sum(G.weights[m2] * vol[m2]) / vol[m2].sum())
    if avg_2q == 0:
        return {"ratio": None, "power_mean": pm, "avg_Q": avg_q, "avg_2Q": 0.0,
                "floor": None, "floor_ok": True, "note": "avg over 2Q vanishes"}
    ratio = pm / avg_2q
    floor = avg_q / avg_2q
    return {"ratio": ratio, "power_mean": pm, "avg_Q": avg_q, "avg_2Q": avg_2q, "floor": floor,
            "floor_ok": bool(pm >= avg_q * (1 - 1e-12)), "note": ""}


@dataclass
class GehringReport:
    p: float
    radii: list
    ratios: list            # per-radius max over sampled Q
    start_ratios: list      # Q based at the start point
    floor_ok: bool
    max_over_min: float
    d0_hat: float
    probe: dict
    seed: int
    h: float
    n_paths: int
    samples: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        out = dict(self.__dict__)
        out.pop("samples")
        return out

    header = ("R", "max_ratio", "start_ratio", "p", "seed", "h", "n_paths")

    def rows(self) -> list[list]:
        return [[R, r, s, self.p, self.seed, self.h, self.n_paths]
                for R, r, s in zip(self.radii, self.ratios, self.start_ratios)]


def gehring_sweep(spec, lam: float, radii: Sequence[float], p: float, n_paths: int,
                  h: float = 1e-3, seed: int = 0, start=None, n_centers: int = 8,
                  exponent_grid: Sequence[float] = (1.25, 1.5, 1.75, 2.0)) -> GehringReport:
    """Reverse-Hoelder ratios over a radius sweep.

    Each radius gets its own run on the parabolic scale of that radius: step
    ``h (2R)**2``, horizon ``5 R**2``, bins ``dx = R/4`` and ``dt = dx**2`` on
    ``[t0, t0 + 5R^2] x (x0 + [-3R, 3R]^d)``.  Besides the cylinder at the
    start point, ``n_centers`` cylinders with lattice-aligned random bases
    (``t in [t0, t0 + R^2]``, ``|x - x0| <= R``, same lattice offsets for
    every radius) are evaluated; the per-radius statistic is the maximum.
    """
    radii = sorted(float(r) for r in radii)
    t0 = 0.0 if start is None else float(start[0])
    x0 = np.zeros(spec.d) if start is None else np.asarray(start[1], dtype=float)
    rng = auxiliary_generator(seed, "gehring-centers")
    offsets = []
    while len(offsets) < n_centers:
        jt = int(rng.integers(0, 17))
        jx = rng.integers(-4, 5, size=spec.d)
        if np.sum(jx**2) <= 16:
            offsets.append((jt, jx))
    ratios, start_ratios, samples = [], [], []
    floor_ok = True
    G_last = None
    for i, R in enumerate(radii):
        hR = h * (2 * R) ** 2
        K = int(round(5 * R * R / hR))
        batch = run_batch(spec, n_paths, (t0, x0), hR, K * hR, seed + 7919 * (i + 1))
        dx = R / 4
        edges = parabolic_edges((t0, t0 + 5 * R * R), 3 * R, dx, spec.d, x0)
        G = estimate_G(batch, lam, edges)
        G_last = G if G_last is None else G_last
        q0 = ParabolicCylinder.standard(R, t0, x0)
        res0 = reverse_holder_ratio(G, q0, p)
        vals = [res0["ratio"]]
        floor_ok &= res0["floor_ok"]
        for jt, jx in offsets:
            q = ParabolicCylinder.standard(R, t0 + jt * dx * dx, x0 + jx * dx)
            res = reverse_holder_ratio(G, q, p)
            floor_ok &= res["floor_ok"]
            if res["ratio"] is not None:
                vals.append(res["ratio"])
        samples.append(vals)
        ratios.append(float(max(v for v in vals if v is not None)))
        start_ratios.append(float(res0["ratio"]) if res0["ratio"] is not None else math.nan)
    probe = integrability_exponent_probe(G_last, exponent_grid)
    return GehringReport(p, radii, ratios, start_ratios, bool(floor_ok),
                         float(max(ratios) / min(ratios)), probe["d0_hat"], probe, seed, h,
                         n_paths, samples)


def integrability_exponent_probe(G: OccupationHistogram,
                                 exponent_grid: Sequence[float] = (1.25, 1.5, 1.75, 2.0),
                                 tol: float = REFINE_TOL) -> dict:
    """Largest power ``s`` whose L_s norm of the histogram grows by at most
    ``tol`` from the 2x-coarsened histogram to the given one.

    ``d0_hat = 1 / (s - 1)`` (the ``d0`` for which ``s`` is the conjugate of
    ``d0 + 1``); ``d0_hat = d`` when no power is stable.
    """
    grid = sorted(float(s) for s in exponent_grid)
    if grid[0] <= 1 or grid[-1] > 2:
        raise ValueError("exponent grid must lie in (1, 2]")
    coarse = G.coarsen(2)
    table = []
    for s in grid:
        nf = lebesgue_norm(G.weights, G.volumes(), s)
        nc = lebesgue_norm(coarse.weights, coarse.volumes(), s)
        growth = nf / nc - 1 if nc > 0 else math.inf
        table.append({"s": s, "fine": nf, "coarse": nc, "growth": growth,
                      "stable": bool(growth <= tol)})
    stable = [row["s"] for row in table if row["stable"]]
    d = G.d
    if stable:
        s = max(stable)
        d0_hat = 1.0 / (s - 1.0)
    else:
        d0_hat = float(d)
    return {"d0_hat": float(d0_hat), "table": table,
            "window_ok": bool(d / 2 - 1e-12 <= d0_hat <= d + 1e-12)}
