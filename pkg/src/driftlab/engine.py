"""Truncated Euler simulation of ``dx = sigma(t, x) dw + b(t, x) dt``.

The drift is cut off where it is large, ``b_nu = b * 1{|b| < nu}``, which
also removes non-finite values at singular points.  The scheme is

    x_{k+1} = x_k + sigma(t_k, x_k) dW_k + b_nu(t_k, x_k) h,

with ``dW_k`` the k-th block of normals from the path's own Philox stream
(see :mod:`driftlab.rng`).  Exits are detected on the grid: the first grid
point outside a region is the exit point (no bridge correction), so exit
times carry an ``O(sqrt(h))`` upward bias.

Batches are lazy.  :func:`drive` regenerates paths block by block and hands
time chunks to observers, which is how every estimator in the package
consumes paths without storing them.
"""

from __future__ import annotations

import csv
import io
import math
import struct
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .geometry import ParabolicCylinder
from .rng import path_generator

__all__ = [
    "CapacityError",
    "DiffusionSpec",
    "PathSample",
    "ExitRecord",
    "PathBatch",
    "PathChunk",
    "StopResult",
    "CylinderExit",
    "BallExit",
    "HitSet",
    "simulate_path",
    "run_batch",
    "drive",
    "exit_time_cylinder",
    "exit_time_ball",
    "hitting_time",
    "batch_exits",
    "bm",
]

# Byte budget for a materialized (n, K+1, d) state array.
MAX_MATERIALIZE_BYTES = 1 << 30
DEFAULT_BLOCK = 8192
DEFAULT_CHUNK = 256


class CapacityError(MemoryError):
    """Requested work exceeds the configured memory budget."""


@dataclass(frozen=True)
class DiffusionSpec:
    """Coefficients of the simulated diffusion.

    ``sigma`` is a scalar (multiple of the identity), a constant symmetric
    matrix or a callable returning ``(n, d, d)``; ``b`` is ``None`` (zero), a
    constant vector or a callable returning ``(n, d)``.  The diffusion matrix
    is ``a = sigma sigma^T / 2`` and must have eigenvalues in
    ``[delta, 1/delta]`` at the spot-check points.  ``nu`` is the drift
    truncation level (``inf`` disables truncation).
    """

    d: int = 2
    sigma: object = 1.0
    b: object = None
    delta: float = 0.25
    nu: float = math.inf
    label: str = ""
    check: bool = True

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 2:
            raise ValueError("dimension must be an integer >= 2")
        if not (0 < self.delta < 1):
            raise ValueError("ellipticity constant delta must lie in (0, 1)")
        if not self.nu > 0:
            raise ValueError("truncation level nu must be positive")
        if isinstance(self.sigma, np.ndarray) or isinstance(self.sigma, (list, tuple)):
            m = np.asarray(self.sigma, dtype=float)
            if m.shape != (self.d, self.d) or not np.allclose(m, m.T):
                raise ValueError("sigma must be a symmetric d x d matrix")
            object.__setattr__(self, "sigma", m)
        if self.b is not None and not callable(self.b):
            c = np.asarray(self.b, dtype=float).reshape(self.d)
            object.__setattr__(self, "b", c)
        if self.check:
            self.check_ellipticity()

    # -- coefficients -----------------------------------------------------

    @property
    def deterministic(self) -> bool:
        return np.isscalar(self.sigma) and float(self.sigma) == 0.0

    def sigma_at(self, t, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        n = x.shape[0]
        s = self.sigma
        if callable(s):
            return np.asarray(s(np.broadcast_to(np.asarray(t, dtype=float), (n,)), x), dtype=float)
        if np.isscalar(s):
            return np.broadcast_to(float(s) * np.eye(self.d), (n, self.d, self.d))
        return np.broadcast_to(s, (n, self.d, self.d))

    def diffusion_matrix(self, t, x) -> np.ndarray:
        s = self.sigma_at(t, x)
        return 0.5 * np.einsum("nij,nkj->nik", s, s)

    def raw_drift(self, t, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.b is None:
            return np.zeros_like(x)
        if callable(self.b):
            t = np.broadcast_to(np.asarray(t, dtype=float), x.shape[:-1])
            return np.asarray(self.b(t, x), dtype=float)
        return np.broadcast_to(self.b, x.shape)

    def drift(self, t, x) -> np.ndarray:
        """Truncated drift ``b * 1{|b| < nu}``; non-finite values become 0."""
        b = self.raw_drift(t, x)
        if self.b is None:
            return b
        mag = np.sqrt(np.sum(b * b, axis=-1))
        keep = mag < self.nu  # False for inf and nan
        return np.where(keep[..., None], b, 0.0)

    def diffuse(self, t, x, dw) -> np.ndarray:
        """``sigma(t, x) dw`` row by row, written as explicit sums so the
        result for a path does not depend on the block it is computed in."""
        s = self.sigma
        if np.isscalar(s):
            return float(s) * dw
        if callable(s):
            m = np.asarray(s(t, x), dtype=float)
        else:
            m = s[None]
        out = m[..., :, 0] * dw[:, 0:1]
        for j in range(1, self.d):
            out = out + m[..., :, j] * dw[:, j:j + 1]
        return out

    def increment(self, t, x, dw, h) -> np.ndarray:
        inc = self.diffuse(t, x, dw)
        if self.b is not None:
            inc = inc + self.drift(t, x) * h
        return inc

    def check_ellipticity(self, points: Iterable | None = None, tol: float = 1e-12) -> None:
        if self.deterministic:
            return  # sigma = 0 is the degenerate test process
        if points is None:
            grid = np.linspace(-1.0, 1.0, 3)
            xs = np.array(np.meshgrid(*([grid] * self.d), indexing="ij")).reshape(self.d, -1).T
            pts = [(t, xs) for t in (0.0, 0.5, 1.0)]
        else:
            pts = points
        for t, xs in pts:
            a = self.diffusion_matrix(t, xs)
            ev = np.linalg.eigvalsh(a)
            if ev.min() < self.delta - tol or ev.max() > 1.0 / self.delta + tol:
                raise ValueError(
                    f"a = sigma sigma^T / 2 has eigenvalues in [{ev.min():.4g}, {ev.max():.4g}],"
                    f" outside [delta, 1/delta] = [{self.delta:.4g}, {1 / self.delta:.4g}]"
                )

    def describe(self) -> dict:
        def name(obj):
            if obj is None:
                return "zero"
            if callable(obj):
                return getattr(obj, "__qualname__", "callable")
            return np.asarray(obj).tolist()

        return {"d": self.d, "sigma": name(self.sigma), "b": name(self.b),
                "delta": self.delta, "nu": self.nu, "label": self.label}


def bm(d: int = 2, **kw) -> DiffusionSpec:
    """Standard Brownian motion (``sigma = I``, ``a = I/2``)."""
    kw.setdefault("label", f"BM{d}")
    return DiffusionSpec(d=d, sigma=1.0, b=None, **kw)


# ---------------------------------------------------------------------------
# Single paths and exit records


@dataclass
class PathSample:
    t0: float
    x0: np.ndarray
    step: float
    states: np.ndarray
    rng_stream_id: int = 0
    base_seed: int = 0

    @property
    def n_steps(self) -> int:
        return self.states.shape[0] - 1

    @property
    def horizon(self) -> float:
        return self.n_steps * self.step

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.n_steps + 1) * self.step


@dataclass
class ExitRecord:
    exit_step: int | None
    exit_time: float
    exit_point: np.ndarray
    censored: bool

    def to_row(self) -> list:
        return [self.exit_time, *np.asarray(self.exit_point).tolist(), int(self.censored)]


class CylinderExit:
    """Stop on leaving ``C_{tau,rho}(t0, x0)``."""

    def __init__(self, cyl: ParabolicCylinder):
        self.cyl = cyl
        self._c = np.asarray(cyl.x0)
        self._tmax = cyl.tau * (1.0 - 1e-12)

    def __call__(self, t, x):
        s = np.asarray(t) - self.cyl.t0
        r2 = np.sum((x - self._c) ** 2, axis=-1)
        return (s < 0) | (s >= self._tmax) | (r2 >= self.cyl.rho**2)


class BallExit:
    """Stop on leaving the open ball ``B_R(center)``."""

    def __init__(self, R: float, center):
        self.R = float(R)
        self.center = np.asarray(center, dtype=float)

    def __call__(self, t, x):
        return np.sum((x - self.center) ** 2, axis=-1) >= self.R**2


class HitSet:
    """Stop on entering a set given by a membership predicate."""

    def __init__(self, predicate: Callable):
        self.predicate = predicate

    def __call__(self, t, x):
        return np.asarray(self.predicate(t, x), dtype=bool)


class AnyOf:
    """Stop when any of several rules fires."""

    def __init__(self, *rules):
        self.rules = rules

    def __call__(self, t, x):
        out = self.rules[0](t, x)
        for r in self.rules[1:]:
            out = out | r(t, x)
        return out


def _first_stop(path: PathSample, rule) -> ExitRecord:
    t = path.times
    hit = np.asarray(rule(t, path.states), dtype=bool)
    if hit.any():
        k = int(np.argmax(hit))
        return ExitRecord(k, k * path.step, path.states[k].copy(), False)
    return ExitRecord(None, path.horizon, path.states[-1].copy(), True)


def exit_time_cylinder(path: PathSample, R: float, base=None) -> ExitRecord:
    """First grid exit of ``(t, x_t)`` from ``C_R(base)``; base defaults to the
    path's start.  ``censored`` is set when the horizon is shorter than the
    time face (``horizon < R**2``) and no exit happened."""
    if base is None:
        base = (path.t0, path.x0)
    return _first_stop(path, CylinderExit(ParabolicCylinder.standard(R, base[0], base[1])))


def exit_time_ball(path: PathSample, R: float, center=None) -> ExitRecord:
    center = path.x0 if center is None else center
    return _first_stop(path, BallExit(R, center))


def hitting_time(path: PathSample, region_predicate: Callable) -> ExitRecord:
    """First grid time at which ``(t, x)`` lies in the closed set Gamma."""
    return _first_stop(path, HitSet(region_predicate))


# ---------------------------------------------------------------------------
# Batches


@dataclass
class PathChunk:
    """States ``k0 .. k0 + C`` of the live paths of one block.

    ``live[j, i]`` is True when the interval ``[k0+j, k0+j+1)`` of path
    ``ids[i]`` lies before that path's stopping index.  Row 0 repeats the last
    row of the previous chunk.
    """

    ids: np.ndarray
    k0: int
    t0: np.ndarray
    h: float
    states: np.ndarray
    live: np.ndarray

    @property
    def n_intervals(self) -> int:
        return self.states.shape[0] - 1

    def times(self) -> np.ndarray:
        """Absolute times, shape ``(C+1, m)``."""
        k = self.k0 + np.arange(self.states.shape[0])
        return self.t0[None, :] + k[:, None] * self.h

    def elapsed(self) -> np.ndarray:
        """Elapsed process time of each row, shape ``(C+1,)``."""
        return (self.k0 + np.arange(self.states.shape[0])) * self.h


@dataclass
class StopResult:
    stop_step: np.ndarray      # step index of the stop, K when censored
    stopped: np.ndarray        # False for censored paths
    final_state: np.ndarray    # state at stop_step
    h: float
    n_steps: int

    @property
    def stop_time(self) -> np.ndarray:
        return self.stop_step * self.h

    @property
    def censored(self) -> np.ndarray:
        return ~self.stopped

    def records(self) -> list[ExitRecord]:
        return [ExitRecord(int(k) if s else None, float(k * self.h), p, bool(not s))
                for k, s, p in zip(self.stop_step, self.stopped, self.final_state)]


@dataclass
class PathBatch:
    """Lazily generated ensemble; path ``i`` uses stream ``(base_seed, i)``."""

    spec: DiffusionSpec
    t0: np.ndarray
    x0: np.ndarray
    step: float
    n_steps: int
    base_seed: int
    block: int = DEFAULT_BLOCK
    chunk: int = DEFAULT_CHUNK
    meta: dict = field(default_factory=dict)

    @property
    def n_paths(self) -> int:
        return self.x0.shape[0]

    @property
    def horizon(self) -> float:
        return self.n_steps * self.step

    @property
    def d(self) -> int:
        return self.spec.d

    def materialize(self) -> np.ndarray:
        """All states, shape ``(n_paths, K+1, d)``."""
        nbytes = self.n_paths * (self.n_steps + 1) * self.d * 8
        if nbytes > MAX_MATERIALIZE_BYTES:
            raise CapacityError(
                f"materializing {self.n_paths} paths x {self.n_steps + 1} states needs"
                f" {nbytes / 2**20:.0f} MiB > budget {MAX_MATERIALIZE_BYTES / 2**20:.0f} MiB"
            )
        out = np.empty((self.n_paths, self.n_steps + 1, self.d))

        class _Store:
            def update(self, ch):
                rows = slice(ch.k0, ch.k0 + ch.states.shape[0])
                out[ch.ids, rows] = np.swapaxes(ch.states, 0, 1)

            def finalize(self, res):
                pass

        drive(self, observers=[_Store()])
        return out

    def path(self, i: int) -> PathSample:
        sub = self.subset([i])
        states = sub.materialize()[0]
        return PathSample(float(self.t0[i]), self.x0[i].copy(), self.step, states,
                          rng_stream_id=i, base_seed=self.base_seed)

    def subset(self, ids: Sequence[int]) -> "_SubBatch":
        return _SubBatch(self, np.asarray(ids, dtype=np.int64))

    def stream_ids(self) -> np.ndarray:
        return np.arange(self.n_paths)

    def provenance(self) -> dict:
        return {"seed": self.base_seed, "h": self.step, "n_paths": self.n_paths}


class _SubBatch(PathBatch):
    """Selected paths of a parent batch, keeping their original streams."""

    def __init__(self, parent: PathBatch, ids: np.ndarray):
        super().__init__(parent.spec, parent.t0[ids], parent.x0[ids], parent.step,
                         parent.n_steps, parent.base_seed, parent.block, parent.chunk,
                         dict(parent.meta))
        self._ids = ids

    def stream_ids(self) -> np.ndarray:
        return self._ids


def _steps_for(h: float, T: float) -> int:
    if not h > 0:
        raise ValueError("step h must be positive")
    K = int(round(T / h))
    if K < 1 or abs(K * h - T) > 1e-9 * max(T, h):
        raise ValueError(f"horizon T={T} is not an integer multiple of h={h}")
    return K


def run_batch(spec: DiffusionSpec, n_paths: int, start, h: float, T: float,
              base_seed: int, **kw) -> PathBatch:
    """Batch of ``n_paths`` paths from ``start = (t0, x0)``.

    ``t0`` may be a scalar or an ``(n,)`` array and ``x0`` a point or an
    ``(n, d)`` array, giving each path its own start.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    if base_seed is None:
        raise ValueError("a seed is required")
    t0, x0 = start
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim == 1:
        if x0.size != spec.d:
            raise ValueError("start point has the wrong dimension")
        x0 = np.broadcast_to(x0, (n_paths, spec.d)).copy()
    elif x0.shape != (n_paths, spec.d):
        raise ValueError("per-path starts must have shape (n_paths, d)")
    t0 = np.broadcast_to(np.asarray(t0, dtype=float), (n_paths,)).copy()
    K = _steps_for(h, T)
    return PathBatch(spec, t0, x0, float(h), K, int(base_seed), **kw)


def simulate_path(spec: DiffusionSpec, start, step: float, horizon: float,
                  stream=0) -> PathSample:
    """One Euler path.  ``stream`` is ``(base_seed, index)`` or a seed
    (index 0)."""
    seed, idx = (stream, 0) if np.isscalar(stream) else stream
    batch = run_batch(spec, idx + 1, start, step, horizon, seed)
    return batch.path(idx)


def drive(batch: PathBatch, stop=None, observers: Sequence = (),
          n_steps: int | None = None) -> StopResult:
    """Generate ``batch`` block by block, stopping each path at the first grid
    point where ``stop(t, x)`` holds, and feed every chunk to ``observers``.

    Observers implement ``update(chunk)`` and ``finalize(result)``.  Blocks
    are processed in path-index order, so any reduction an observer performs
    in ``update`` order is reproducible.
    """
    spec = batch.spec
    n, d, h = batch.n_paths, batch.d, batch.step
    K = batch.n_steps if n_steps is None else min(n_steps, batch.n_steps)
    sqrt_h = math.sqrt(h)
    streams = batch.stream_ids()
    stop_step = np.full(n, K, dtype=np.int64)
    stopped = np.zeros(n, dtype=bool)
    final = np.empty((n, d))
    for b0 in range(0, n, batch.block):
        ids = np.arange(b0, min(n, b0 + batch.block))
        gens = [path_generator(batch.base_seed, int(streams[i])) for i in ids]
        x = batch.x0[ids].copy()
        t0 = batch.t0[ids]
        if stop is not None:
            s0 = np.asarray(stop(t0, x), dtype=bool)
            if s0.any():
                stop_step[ids[s0]] = 0
                stopped[ids[s0]] = True
                final[ids[s0]] = x[s0]
            keep = ~s0
            ids, x, t0 = ids[keep], x[keep], t0[keep]
            gens = [g for g, kp in zip(gens, keep) if kp]
        k = 0
        while ids.size and k < K:
            C = min(batch.chunk, K - k)
            m = ids.size
            dw = np.empty((m, C, d))
            if not spec.deterministic:
                for j, g in enumerate(gens):
                    g.standard_normal(out=dw[j])
                dw *= sqrt_h
            else:
                dw.fill(0.0)
            states = np.empty((C + 1, m, d))
            states[0] = x
            for j in range(C):
                tj = t0 + (k + j) * h
                states[j + 1] = states[j] + spec.increment(tj, states[j], dw[:, j], h)
            live = np.ones((C, m), dtype=bool)
            hit = np.zeros(m, dtype=bool)
            if stop is not None:
                tt = t0[None, :] + (k + 1 + np.arange(C))[:, None] * h
                st = np.asarray(stop(tt.reshape(-1), states[1:].reshape(-1, d)),
                                dtype=bool).reshape(C, m)
                hit = st.any(axis=0)
                if hit.any():
                    first = np.argmax(st, axis=0)
                    cols = np.nonzero(hit)[0]
                    live[:, cols] = np.arange(C)[:, None] <= first[cols][None, :]
                    stop_step[ids[cols]] = k + 1 + first[cols]
                    stopped[ids[cols]] = True
                    final[ids[cols]] = states[first[cols] + 1, cols]
            chunk = PathChunk(ids, k, t0, h, states, live)
            for ob in observers:
                ob.update(chunk)
            if not spec.deterministic:
                if not np.all(np.isfinite(states[-1])):
                    raise FloatingPointError("non-finite state after truncation")
            k += C
            if hit.any():
                keep = ~hit
                ids, x, t0 = ids[keep], states[-1][keep], t0[keep]
                gens = [g for g, kp in zip(gens, keep) if kp]
            else:
                x = states[-1]
        if ids.size:
            final[ids] = x
    res = StopResult(stop_step, stopped, final, h, K)
    for ob in observers:
        ob.finalize(res)
    return res


def batch_exits(batch: PathBatch, rule, observers: Sequence = ()) -> StopResult:
    """Stopping data for every path of ``batch`` under ``rule``."""
    return drive(batch, stop=rule, observers=observers)


def summary_csv(batch: PathBatch, result: StopResult) -> str:
    """CSV rows ``path_id, exit_time, exit_point..., censored`` plus provenance."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["path_id", "exit_time"] + [f"exit_x{i}" for i in range(batch.d)]
               + ["censored", "seed", "h", "n_paths"])
    for i in range(batch.n_paths):
        w.writerow([i, fmt(result.stop_time[i])] + [fmt(v) for v in result.final_state[i]]
                   + [int(not result.stopped[i]), batch.base_seed, fmt(batch.step), batch.n_paths])
    return buf.getvalue()


def dump_paths(batch: PathBatch, path) -> None:
    """Binary records: ``<q stream_id><d h><q K><q d>`` then ``(K+1)*d`` doubles."""
    states = batch.materialize()
    with open(path, "wb") as fh:
        for i, sid in enumerate(batch.stream_ids()):
            fh.write(struct.pack("<qdqq", int(sid), batch.step, batch.n_steps, batch.d))
            fh.write(states[i].astype("<f8").tobytes())


def load_paths(path) -> list[tuple[int, float, np.ndarray]]:
    out = []
    with open(path, "rb") as fh:
        while True:
            head = fh.read(32)
            if not head:
                break
            sid, h, K, d = struct.unpack("<qdqq", head)
            data = np.frombuffer(fh.read((K + 1) * d * 8), dtype="<f8").reshape(K + 1, d)
            out.append((sid, h, data))
    return out


def fmt(v: float) -> str:
    """Float formatting with 17 significant digits."""
    return format(float(v), ".17g")
