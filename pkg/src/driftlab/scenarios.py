"""Scenario configs, the registry of built-in scenarios and the runner.

A scenario is a YAML mapping::

    schema_version: 1
    name: bm2-exit-scaling
    kind: exit_scaling          # key of KINDS
    seed: 20240611              # mandatory
    budget: {n_paths: 20000, h: 0.001, horizon: null}
    process:                    # ignored by kinds that build their own
      d: 2
      sigma: {name: identity}
      drift: {name: zero}
      delta: 0.25
      nu: .inf
    params: {radii: [0.5, 1.0, 2.0]}
    criteria: [C2]

:func:`run_scenario` writes ``<out>/<name>/`` with one CSV per table,
``summary.json`` and the resolved ``config.yaml``.  Every CSV row carries
``seed, h, n_paths`` columns; floats use 17 significant digits.  Nothing
time- or host-dependent enters the artifacts.
"""

from __future__ import annotations

import copy
import math
import traceback
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import yaml

from . import estimators as est
from . import green, ito, transport
from .engine import BallExit, DiffusionSpec, drive, run_batch, summary_csv
from .fields import make_drift, make_sigma, make_test_function
from .functionals import mean_se
from .geometry import MixedNormSpec, TensorGrid
from .report import PROVENANCE, json_text, table_text
from .rng import derive_seed

__all__ = [
    "SCHEMA_VERSION",
    "ConfigError",
    "Scenario",
    "Verdict",
    "ScenarioResult",
    "BUILTIN",
    "KINDS",
    "list_scenarios",
    "describe",
    "load_config",
    "build_spec",
    "run_scenario",
]

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid scenario configuration; the message names the offending key."""


@dataclass
class Verdict:
    criterion: str
    estimate: float
    target: float
    tolerance: str
    passed: bool
    note: str = ""

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class Scenario:
    name: str
    kind: str
    seed: int
    n_paths: int
    h: float
    horizon: float | None = None
    process: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    criteria: list = field(default_factory=list)
    description: str = ""

    def to_config(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "name": self.name, "kind": self.kind,
                "description": self.description, "seed": self.seed,
                "budget": {"n_paths": self.n_paths, "h": self.h, "horizon": self.horizon},
                "process": copy.deepcopy(self.process), "params": copy.deepcopy(self.params),
                "criteria": list(self.criteria)}


@dataclass
class ScenarioResult:
    name: str
    status: str                      # "pass", "fail" or "error"
    verdicts: list
    out_dir: Path | None
    artifacts: list
    summary: dict
    error: str = ""

    @property
    def exit_code(self) -> int:
        return {"pass": 0, "fail": 1, "error": 3}[self.status]


# ---------------------------------------------------------------------------
# Validation

_TOP_KEYS = {"schema_version", "name", "kind", "description", "seed", "budget", "process",
             "params", "criteria"}
_BUDGET_KEYS = {"n_paths", "h", "horizon"}
_PROCESS_KEYS = {"d", "sigma", "drift", "delta", "nu"}


def _need(cond: bool, key: str, msg: str) -> None:
    if not cond:
        raise ConfigError(f"{key}: {msg}")


def _number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def load_config(source, overrides: dict | None = None) -> Scenario:
    """Validate a config (mapping, YAML text, file path or built-in name).

    ``overrides`` may set ``seed``, ``n_paths`` and ``h``.
    """
    if isinstance(source, Scenario):
        cfg = source.to_config()
    elif isinstance(source, dict):
        cfg = copy.deepcopy(source)
    elif isinstance(source, str) and source in BUILTIN:
        cfg = copy.deepcopy(BUILTIN[source])
    else:
        path = Path(source)
        if not path.exists():
            raise ConfigError(f"scenario: {source!r} is neither a built-in name nor a file")
        try:
            cfg = yaml.safe_load(path.read_text(encoding="utf-8"))
        except yaml.YAMLError as exc:
            raise ConfigError(f"config: not valid YAML ({exc})") from None
    _need(isinstance(cfg, dict), "config", "must be a mapping")
    unknown = sorted(set(cfg) - _TOP_KEYS)
    _need(not unknown, unknown[0] if unknown else "", "unknown key")
    _need(cfg.get("schema_version") == SCHEMA_VERSION, "schema_version",
          f"must be {SCHEMA_VERSION}")
    _need(isinstance(cfg.get("name"), str) and cfg["name"] != "", "name", "required string")
    _need(cfg.get("kind") in KINDS, "kind", f"must be one of {sorted(KINDS)}")
    overrides = dict(overrides or {})
    seed = overrides.get("seed", cfg.get("seed"))
    _need(isinstance(seed, int) and not isinstance(seed, bool) and seed >= 0, "seed",
          "required nonnegative integer")
    budget = cfg.get("budget")
    _need(isinstance(budget, dict), "budget", "required mapping")
    unknown = sorted(set(budget) - _BUDGET_KEYS)
    _need(not unknown, f"budget.{unknown[0]}" if unknown else "", "unknown key")
    n_paths = overrides.get("n_paths", budget.get("n_paths"))
    _need(isinstance(n_paths, int) and not isinstance(n_paths, bool) and n_paths >= 2,
          "budget.n_paths", "integer >= 2 required")
    h = overrides.get("h", budget.get("h"))
    _need(_number(h) and h > 0 and math.isfinite(h), "budget.h", "positive number required")
    horizon = budget.get("horizon")
    _need(horizon is None or (_number(horizon) and horizon > 0), "budget.horizon",
          "positive number or null")
    process = cfg.get("process") or {}
    _need(isinstance(process, dict), "process", "must be a mapping")
    unknown = sorted(set(process) - _PROCESS_KEYS)
    _need(not unknown, f"process.{unknown[0]}" if unknown else "", "unknown key")
    params = cfg.get("params") or {}
    _need(isinstance(params, dict), "params", "must be a mapping")
    criteria = cfg.get("criteria") or []
    _need(isinstance(criteria, list) and all(isinstance(c, str) for c in criteria), "criteria",
          "list of criterion ids")
    sc = Scenario(cfg["name"], cfg["kind"], int(seed), int(n_paths), float(h),
                  None if horizon is None else float(horizon), process, params, criteria,
                  str(cfg.get("description", "")))
    if KINDS[sc.kind].needs_process:
        build_spec(sc)  # resolve registry ids now so errors are configuration errors
    return sc


def build_spec(sc: Scenario) -> DiffusionSpec:
    """:class:`DiffusionSpec` from the ``process`` block."""
    p = sc.process
    d = p.get("d", 2)
    _need(isinstance(d, int) and not isinstance(d, bool) and d >= 1, "process.d",
          "positive integer required")
    sig = p.get("sigma", {"name": "identity"})
    _need(isinstance(sig, dict) and "name" in sig, "process.sigma", "mapping with a name")
    drf = p.get("drift", {"name": "zero"})
    _need(isinstance(drf, dict) and "name" in drf, "process.drift", "mapping with a name")
    try:
        sigma = make_sigma(sig["name"], d, **(sig.get("params") or {}))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"process.sigma: {exc}") from None
    try:
        b = make_drift(drf["name"], d, **(drf.get("params") or {}))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"process.drift: {exc}") from None
    nu = p.get("nu", math.inf)
    _need(_number(nu) and nu > 0, "process.nu", "positive number (or .inf)")
    delta = p.get("delta", 0.25)
    _need(_number(delta) and 0 < delta <= 1, "process.delta", "number in (0, 1]")
    try:
        return DiffusionSpec(d=d, sigma=sigma, b=b, delta=float(delta), nu=float(nu),
                             label=sc.name)
    except ValueError as exc:
        raise ConfigError(f"process: {exc}") from None


def _param(sc: Scenario, key: str, default):
    return sc.params.get(key, default)


# ---------------------------------------------------------------------------
# Artifact sink


class _Sink:
    """Writes tables as they are produced, so a crash leaves partial output."""

    def __init__(self, out_dir: Path | None, sc: Scenario):
        self.out_dir = out_dir
        self.sc = sc
        self.files: list[Path] = []
        if out_dir is not None:
            out_dir.mkdir(parents=True, exist_ok=True)

    def table(self, name: str, header, rows, h: float | None = None,
              n_paths: int | None = None) -> None:
        header = list(header)
        rows = [list(r) for r in rows]
        if not set(PROVENANCE) <= set(header):
            prov = [self.sc.seed, self.sc.h if h is None else h,
                    self.sc.n_paths if n_paths is None else n_paths]
            header += [c for c in PROVENANCE if c not in header]
            rows = [r + prov for r in rows]
        self._write(f"{name}.csv", table_text(header, rows))

    def text(self, filename: str, content: str) -> None:
        self._write(filename, content)

    def _write(self, filename: str, content: str) -> None:
        if self.out_dir is None:
            return
        path = self.out_dir / filename
        path.write_text(content, encoding="utf-8", newline="")
        self.files.append(path)


# ---------------------------------------------------------------------------
# Kinds


@dataclass
class _Kind:
    run: Callable
    needs_process: bool = True


KINDS: dict[str, _Kind] = {}


def _kind(name: str, needs_process: bool = True):
    def deco(fn):
        KINDS[name] = _Kind(fn, needs_process)
        return fn

    return deco


def _within(value, target, tol) -> bool:
    return bool(abs(value - target) <= tol)


@_kind("ball_exit")
def _ball_exit(sc: Scenario, sink: _Sink) -> tuple[dict, list]:
    spec = build_spec(sc)
    R = float(_param(sc, "R", 1.0))
    T = sc.horizon or 4.0 * R * R
    x0 = np.zeros(spec.d)
    batch = run_batch(spec, sc.n_paths, (0.0, x0), sc.h, est._horizon(T, sc.h), sc.seed)
    res = drive(batch, stop=BallExit(R, x0))
    sink.text("exits.csv", summary_csv(batch, res))
    tau = res.stop_time[res.stopped]
    m, se = mean_se(tau)
    target = R * R / spec.d
    tol = max(0.02 * target, 3 * float(se))
    cens = float(1 - res.stopped.mean())
    sink.table("ball_exit", ("R", "mean_exit_time", "se", "target", "censored"),
               [[R, m, se, target, cens]])
    v = Verdict("C1", float(m), target, f"max(2% rel, 3 SE) = {tol:.3g}",
                _within(m, target, tol) and cens == 0.0,
                "" if cens == 0 else f"{cens:.2%} censored")
    return {"mean_exit_time": float(m), "se": float(se), "target": target, "censored": cens,
            "R": R, "horizon": T}, [v]


@_kind("exit_scaling")
def _exit_scaling(sc, sink):
    spec = build_spec(sc)
    rep = est.exit_moment_scaling(spec, _param(sc, "radii", [0.5, 1.0, 2.0]), sc.n_paths,
                                  sc.h, sc.seed)
    sink.table("exit_scaling", rep.header, rep.rows())
    v = Verdict("C2", rep.exponent_hat, 2.0, "+-0.15", _within(rep.exponent_hat, 2.0, 0.15),
                spec.label)
    return rep.to_dict(), [v]


_TAIL_GRID = [0.06, 0.07, 0.08, 0.1, 0.125, 0.15, 0.2, 0.25, 0.3, 0.4, 0.5]


@_kind("tail_bound")
def _tail_bound(sc, sink):
    spec = build_spec(sc)
    R = float(_param(sc, "R", 1.0))
    scale = float(_param(sc, "rescale", 2.0))
    grid = [t * R * R for t in _param(sc, "t_grid", _TAIL_GRID)]
    fit = est.tail_bound_fit(spec, R, grid, sc.n_paths, sc.h, sc.seed)
    cmp_ = est.tail_rescaled_comparison(spec, fit, scale, sc.n_paths,
                                        derive_seed(sc.seed, "rescaled"))
    other = cmp_["rescaled"]
    sink.table("tail_fit", fit.header, fit.rows())
    sink.table("tail_rescaled", ("t", "tail_R", "tail_rescaled", "z"),
               [[t, a, b, z] for t, a, b, z in zip(fit.t_grid, fit.tail, other.tail, cmp_["z"])])
    ok = fit.c_hat > 0 and fit.r2 >= 0.95 and cmp_["agree"]
    v = Verdict("C3", fit.c_hat, 0.5, "c_hat > 0, R^2 >= 0.95, rescaled within 3 SE", bool(ok),
                f"R^2={fit.r2:.5f}, max z={cmp_['max_z']:.2f}")
    summary = fit.to_dict()
    summary.update(rescaled=other.to_dict(), max_z=cmp_["max_z"], agree=cmp_["agree"])
    return summary, [v]


@_kind("modulus")
def _modulus(sc, sink):
    spec = build_spec(sc)
    n = int(_param(sc, "n", 2))
    ivs = [tuple(iv) for iv in _param(sc, "intervals", [[0.0, 0.25], [0.0, 1.0], [0.0, 4.0]])]
    rep = est.modulus_moments(spec, n, ivs, sc.n_paths, sc.h, sc.seed)
    sink.table("modulus", ("s", "t", "ratio", "se"),
               [[s, t, r, e] for (s, t), r, e in zip(ivs, rep["ratios"], rep["se"])])
    v = Verdict("C4", rep["relative_spread"], 0.0, "max/min - 1 <= 0.15", not rep["flag"])
    return rep, [v]


@_kind("green_pairing")
def _green_pairing(sc, sink):
    spec = build_spec(sc)
    lam = float(_param(sc, "lam", 1.0))
    T = sc.horizon or 6.0 / lam
    dx = float(_param(sc, "dx", 0.125))
    edges = green.parabolic_edges((0.0, float(_param(sc, "t_max", 1.0))),
                                  float(_param(sc, "x_half", 2.0)), dx, spec.d)
    batch = run_batch(spec, sc.n_paths, (0.0, np.zeros(spec.d)), sc.h, est._horizon(T, sc.h),
                      sc.seed)
    rep = green.pairing_check(batch, lam, edges, int(_param(sc, "n_functions", 20)), sc.seed)
    sink.table("pairings", ("function", "paired", "direct", "direct_se", "z"),
               [[j, a, b, s, z] for j, (a, b, s, z) in
                enumerate(zip(rep["paired"], rep["direct"], rep["direct_se"], rep["z"]))])
    sink.table("mass", ("lambda", "total_mass", "remainder"),
               [[lam, rep["total_mass"], rep["mass_remainder"]]])
    v = Verdict("C5", rep["max_z"], 0.0, "mass within remainder; every |z| <= 3",
                rep["mass_ok"] and rep["pairs_ok"], f"total mass {rep['total_mass']:.6f}")
    summary = {k: v_ for k, v_ in rep.items() if k != "histogram"}
    summary.update(lam=lam, horizon=T)
    return summary, [v]


@_kind("spatial_green")
def _spatial_green(sc, sink):
    spec = build_spec(sc)
    lam = float(_param(sc, "lam", 1.0))
    T = sc.horizon or 6.0 / lam
    half = float(_param(sc, "x_half", 1.2))
    nb = int(_param(sc, "bins", 24))
    sub = int(_param(sc, "subcells", 6))
    edges = [np.linspace(-half, half, nb + 1)] * spec.d
    batch = run_batch(spec, sc.n_paths, (0.0, np.zeros(spec.d)), sc.h, est._horizon(T, sc.h),
                      sc.seed)
    g = green.estimate_g(batch, lam, edges)
    kernel = green.spatial_kernel(lam, spec.d)
    dx = 2 * half / nb
    # cell averages of the kernel on a sub-midpoint lattice
    off1 = ((np.arange(sub) + 0.5) / sub - 0.5) * dx
    off = np.stack(np.meshgrid(*[off1] * spec.d, indexing="ij"), -1).reshape(-1, spec.d)
    pts = g.center_points()
    oracle = np.array([kernel(p + off).mean() for p in pts]).reshape(g.shape)
    r = np.sqrt(np.sum(pts**2, -1)).reshape(g.shape)
    shells = np.round(np.arange(0.2, 1.0 + 1e-9, 0.1), 10)
    rows, worst = [], 0.0
    for lo, hi in zip(shells[:-1], shells[1:]):
        m = (r >= lo) & (r < hi)
        ratio = float(g.weights[m].sum() / oracle[m].sum())
        worst = max(worst, abs(ratio - 1))
        rows.append([lo, hi, int(m.sum()), float(g.weights[m].mean()),
                     float(oracle[m].mean()), ratio])
    sink.table("shells", ("r_lo", "r_hi", "cells", "histogram", "kernel", "ratio"), rows)
    v = Verdict("C6", worst, 0.0, "max |ratio - 1| <= 0.10 on 0.2 <= |x| <= 1", worst <= 0.10)
    return {"max_rel_error": worst, "lam": lam, "horizon": T, "total_mass": g.total_mass(),
            "overflow": g.overflow, "shell_ratios": [row[-1] for row in rows]}, [v]


@_kind("reverse_holder")
def _reverse_holder(sc, sink):
    spec = build_spec(sc)
    p = float(_param(sc, "p", spec.d + 1))
    radii = _param(sc, "radii", [1 / 16, 1 / 8, 1 / 4, 1 / 2])
    rep = green.gehring_sweep(spec, float(_param(sc, "lam", 1.0)), radii, p, sc.n_paths,
                              sc.h, sc.seed, n_centers=int(_param(sc, "n_centers", 8)))
    sink.table("reverse_holder", rep.header, rep.rows())
    ok = rep.max_over_min <= 2.0 and rep.floor_ok
    v = Verdict("C7", rep.max_over_min, 1.0, "max/min <= 2 and power-mean floor everywhere",
                bool(ok))
    return rep.to_dict(), [v]


@_kind("dual_norm_slope")
def _dual_norm_slope(sc, sink):
    spec = build_spec(sc)
    lams = [float(v) for v in _param(sc, "lambdas", [1.0, 2.0, 4.0])]
    p, q = _param(sc, "p", 3.0), _param(sc, "q", 3.0)
    ns = MixedNormSpec(float(p), float(q), spec.d)
    T = sc.horizon or 6.0 / min(lams)
    batch = run_batch(spec, sc.n_paths, (0.0, np.zeros(spec.d)), sc.h, est._horizon(T, sc.h),
                      sc.seed)
    edges = [green.parabolic_edges((0.0, 6.0 / lam), 4.0 / math.sqrt(lam),
                                   0.125 / math.sqrt(lam), spec.d) for lam in lams]
    H = green.estimate_histograms(batch, [[lam] for lam in lams], edges)
    theta = est.estimate_theta(spec, sc.seed, sc.n_paths, sc.h)
    rows, vals, stable = [], [], True
    for i, lam in enumerate(lams):
        r = green.dual_norm_check(H[i][0], ns, theta)
        vals.append(r["dual_norm"])
        stable &= r["stable"]
        rows.append([lam, r["dual_norm"], r["coarse_norm"], r["refinement_growth"],
                     r["bound_ratio"], H[i][0].total_mass()])
    slope = float(np.polyfit(np.log(lams), np.log(vals), 1)[0])
    target = -ns.nu(spec.d) - spec.d / (2 * ns.p)
    sink.table("dual_norm", ("lambda", "dual_norm", "coarse_norm", "refinement_growth",
                             "bound_ratio", "total_mass"), rows)
    v = Verdict("C8", slope, target, "+-0.3", _within(slope, target, 0.3) and bool(stable),
                f"theta_hat={theta:.3f}")
    return {"slope": slope, "target": target, "theta_hat": theta, "stable": bool(stable),
            "dual_norms": vals, "lambdas": lams}, [v]


@_kind("ito_suite")
def _ito_suite(sc, sink):
    spec = build_spec(sc)
    d = spec.d
    c = np.asarray(_param(sc, "linear_coef", [1.0, 2.0][:d] + [0.0] * max(0, d - 2)))
    runs = []
    for j, tf in enumerate((ito.linear_function(c), ito.square_norm_function(d),
                            ito.time_only_function(d))):
        runs.append(ito.ito_residual(spec, tf, sc.n_paths, sc.h, derive_seed(sc.seed, "ito", j)))
    inst = transport.example51_instance(d=d)
    ex_spec = DiffusionSpec(d=d, sigma=1.0, b=inst.b, nu=float(_param(sc, "example_nu", 20.0)),
                            label="example51-drift")
    start = _param(sc, "example_start", [-0.3, [0.1] + [0.0] * (d - 1)])
    h_ex = float(_param(sc, "example_h", sc.h))
    runs.append(ito.ito_residual(ex_spec, inst.test_function(), sc.n_paths, h_ex,
                                 derive_seed(sc.seed, "ito", 3),
                                 start=(float(start[0]), np.asarray(start[1], dtype=float))))
    rows = []
    for r in runs:
        rows.append([r["function"], r["mean"], r["se"], int(r["mean_ok"]), r["second_moment"],
                     r["mean_stopped_time"], r["nonfinite_replaced"], r["seed"], r["h"],
                     r["n_paths"]])
    sink.table("ito_residuals", ("function", "mean", "se", "mean_ok", "second_moment",
                                 "mean_stopped_time", "nonfinite", "seed", "h", "n_paths"), rows)
    lin = runs[0]
    iso_target = float(c @ c) * lin["mean_stopped_time"]
    iso_err = abs(lin["second_moment"] / iso_target - 1)
    suite = [runs[0], runs[1], runs[3]]
    exact_zero = abs(runs[2]["mean"]) <= 1e-12 and runs[2]["second_moment"] <= 1e-20
    ok = all(r["mean_ok"] for r in suite) and iso_err <= 0.10
    worst_z = max(abs(r["mean"]) / r["se"] if r["se"] > 0 else 0.0 for r in suite)
    v = Verdict("C9", worst_z, 0.0, "|mean M| <= 3 SE each; isometry within 10%", bool(ok),
                f"isometry rel err {iso_err:.4f}")
    summary = {"runs": [{k: v_ for k, v_ in r.items() if k != "residuals"} for r in runs],
               "isometry_target": iso_target, "isometry_rel_error": iso_err,
               "time_function_exact_zero": bool(exact_zero), "example51": inst.to_dict()}
    return summary, [v]


@_kind("resolvent")
def _resolvent(sc, sink):
    spec = build_spec(sc)
    lams = [float(v) for v in _param(sc, "lambdas", [1.0, 2.0, 4.0, 8.0])]
    f = make_test_function("cylinder", spec.d, R=float(_param(sc, "R", 1.0)))
    half = float(_param(sc, "x_half", 3.0))
    res = _param(sc, "start_resolution", [8] + [16] * spec.d)
    starts = TensorGrid.uniform([(0.0, 1.0)] + [(-half, half)] * spec.d, res)
    n_per = int(_param(sc, "n_per_start", max(2, sc.n_paths // int(np.prod(res)))))
    rep = est.resolvent_apply(spec, f, lams, starts, n_per, sc.h, seed=sc.seed)
    sink.table("resolvent", rep.header, rep.rows(), n_paths=n_per * int(np.prod(res)))
    v = Verdict("C10", rep.slope, -1.0, "+-0.15", _within(rep.slope, -1.0, 0.15))
    return rep.to_dict(), [v]


@_kind("example51", needs_process=False)
def _example51(sc, sink):
    d = int(_param(sc, "d", 2))
    inst = transport.example51_instance(d=d, eps=float(_param(sc, "eps", 0.5)),
                                        q0=float(_param(sc, "q0", 2.0)),
                                        p_choice=_param(sc, "p", None))
    n_pts = int(_param(sc, "n_points", 1000))
    rep = transport.counterexample_report(inst, n_pts, sc.seed)
    tmins = [1e-1, 1e-2, 1e-3, 1e-4, 1e-6]
    resid = [transport.verify_transport_identity(inst, n_pts, sc.seed, t_min=t) for t in tmins]
    doubled = transport.verify_transport_identity(inst, n_pts, sc.seed, drift_scale=2.0)
    mem = transport.membership_check(inst, levels=_param(sc, "levels", [8, 16, 24, 32]),
                                     alpha_violation=float(_param(sc, "alpha_violation", 0.8)))
    book = transport.exponent_bookkeeping(d, inst.p0, inst.q0, inst.p)
    sink.table("transport_identity", ("t_min", "max_residual"),
               [[t, r] for t, r in zip(tmins, resid)] + [["doubled_drift", doubled]])
    mrows = []
    for name in ("b", "du_dt", "hess", "du_dt_violation"):
        for L, val in zip(mem[name]["levels"], mem[name]["norms"]):
            mrows.append([name, L, val])
    sink.table("membership", ("quantity", "level", "norm"), mrows)
    vio = mem["du_dt_violation"]
    diverges = (not vio["stable"]) and all(np.diff(vio["norms"]) > 0)
    ok = (all(inst.checks.values()) and max(resid) <= 1e-10 and rep["u0"] == 1.0
          and mem["consistent"] and diverges and rep["boundary_max_abs_u"] <= 1e-10)
    v = Verdict("C11", max(resid), 0.0, "invariants; residual <= 1e-10; u(0)=1; norms stable, "
                "violation diverges", bool(ok), rep["failed_hypothesis"])
    summary = dict(rep)
    summary.update(transport_residuals=dict(zip(map(str, tmins), resid)),
                   doubled_drift_residual=doubled, bookkeeping=book,
                   membership={k: v_ for k, v_ in mem.items()})
    return summary, [v]


@_kind("max_principle", needs_process=False)
def _max_principle(sc, sink):
    eps_grid = [float(e) for e in _param(sc, "eps", [0.4, 0.2, 0.1])]
    p0, q0, p = (float(_param(sc, k, v)) for k, v in (("p0", 3.0), ("q0", 3.0), ("p", 8.0)))
    d = int(_param(sc, "d", 2))
    nu = float(_param(sc, "nu", 20.0))
    rep = transport.epsilon_sweep(eps_grid, sc.n_paths, sc.h, sc.seed, d, nu, p0, q0, p)
    sink.table("max_principle", ("function", "eps", "nu", "u0", "u0_mc", "u0_mc_se",
                                 "laplacian_term", "bound_value", "N_hat", "N_hat_sq"),
               [[r["function"], r["eps"], r["nu"], r["u0"], r["u0_mc"], r["u0_mc_se"],
                 r["laplacian_term"], r["bound_value"], r["N_hat"], r["N_hat_sq"]]
                for r in rep["rows"]])
    side = max(2, sc.n_paths // int(_param(sc, "side_fraction", 4)))
    tf, b = transport.transport_solution(d)
    ns = MixedNormSpec(p, rep["q"], d)
    trend = [transport.max_principle_bound(tf, b, e, nu, side, ns, p0, q0, sc.h,
                                           derive_seed(sc.seed, "equality", i))
             for i, e in enumerate(eps_grid)]
    fam_tf, fam_b = transport.subsolution_family(d)[2]
    nus = [float(v) for v in _param(sc, "nu_sweep", [5.0, 20.0, 80.0])]
    nsw = transport.nu_sweep(fam_tf, fam_b, eps_grid[len(eps_grid) // 2], nus, side, sc.h,
                             derive_seed(sc.seed, "nu-sweep"), p0, q0, p)
    sink.table("equality_trend", ("eps", "u0_mc", "u0_mc_se"),
               [[r["eps"], r["u0_mc"], r["u0_mc_se"]] for r in trend], n_paths=side)
    sink.table("nu_sweep", ("nu", "u0_mc"), list(zip(nsw["nu"], nsw["u0_mc"])), n_paths=side)
    v = Verdict("C12", rep["spread"], 1.0, "max/min of N_hat across eps <= 2",
                bool(rep["spread"] <= 2.0), f"N_hat={['%.4f' % x for x in rep['N_hat']]}")
    u_trend = [r["u0_mc"] for r in trend]
    summary = {k: v_ for k, v_ in rep.items() if k != "rows"}
    summary.update(equality_trend=u_trend,
                   equality_decreasing=bool(all(np.diff(u_trend) < 0)), nu_sweep=nsw,
                   rows=[{k: v_ for k, v_ in r.items() if k != "hypotheses"} | r["hypotheses"]
                         for r in rep["rows"]])
    return summary, [v]


# ---------------------------------------------------------------------------
# Built-in scenarios

_BM = {"d": 2, "sigma": {"name": "identity"}, "drift": {"name": "zero"}, "delta": 0.25,
       "nu": math.inf}


def _cfg(name, kind, description, criteria, params=None, process=None, n_paths=20000,
         h=1e-3, horizon=None, seed=20240611):
    return {"schema_version": SCHEMA_VERSION, "name": name, "kind": kind,
            "description": description, "seed": seed,
            "budget": {"n_paths": n_paths, "h": h, "horizon": horizon},
            "process": copy.deepcopy(_BM if process is None else process),
            "params": params or {}, "criteria": criteria}


BUILTIN: dict[str, dict] = {c["name"]: c for c in [
    _cfg("bm2-ball-exit", "ball_exit",
         "Mean exit time of planar Brownian motion from the unit ball (oracle 1/d).",
         ["C1"], {"R": 1.0}, h=1e-4, horizon=4.0),
    _cfg("bm2-exit-scaling", "exit_scaling",
         "Power-law fit of E tau_R against R for planar Brownian motion.",
         ["C2"], {"radii": [0.5, 1.0, 2.0]}),
    _cfg("drift-exit-scaling", "exit_scaling",
         "Exit scaling with a truncated, outward singular radial drift.",
         ["C2"], {"radii": [0.5, 1.0, 2.0]},
         process={"d": 2, "sigma": {"name": "identity"},
                  "drift": {"name": "example21",
                            "params": {"alpha": 1.4, "beta": 0.8, "sign": 1.0}},
                  "delta": 0.25, "nu": 20.0}),
    _cfg("bm2-tail-bound", "tail_bound",
         "Gaussian-type tail of the cylinder exit time and its parabolic rescaling.",
         ["C3"], {"R": 1.0, "rescale": 2.0}),
    _cfg("bm2-modulus", "modulus",
         "Second moment of the running maximum over windows of length 0.25, 1, 4.",
         ["C4"], {"n": 2, "intervals": [[0.0, 0.25], [0.0, 1.0], [0.0, 4.0]]}),
    _cfg("bm2-green-pairing", "green_pairing",
         "Total mass of the discounted occupation histogram and 20 random pairings.",
         ["C5"], {"lam": 1.0, "dx": 0.125, "t_max": 1.0, "x_half": 2.0, "n_functions": 20},
         horizon=6.0),
    _cfg("bm3-spatial-green", "spatial_green",
         "Spatial resolvent histogram in 3D against the closed-form kernel.",
         ["C6"], {"lam": 1.0, "x_half": 1.2, "bins": 24, "subcells": 6},
         process={**_BM, "d": 3}, horizon=6.0),
    _cfg("bm2-reverse-holder", "reverse_holder",
         "Reverse-Hoelder ratios of the empirical Green function over a radius sweep.",
         ["C7"], {"lam": 1.0, "radii": [0.0625, 0.125, 0.25, 0.5], "n_centers": 8}),
    _cfg("bm2-dual-norm-slope", "dual_norm_slope",
         "Weighted dual norm of G_lam for lam in {1, 2, 4} and its log-log slope.",
         ["C8"], {"lambdas": [1.0, 2.0, 4.0], "p": 3.0, "q": 3.0}, horizon=6.0),
    _cfg("ito-suite", "ito_suite",
         "Ito residuals for linear, quadratic, time-only and the singular transport "
         "test function.", ["C9"],
         {"linear_coef": [1.0, 2.0], "example_nu": 20.0, "example_h": 1e-4,
          "example_start": [-0.3, [0.1, 0.0]]}),
    _cfg("bm2-resolvent", "resolvent",
         "Resolvent of the unit-cylinder indicator on a start grid; norm decay in lam.",
         ["C10"], {"lambdas": [1.0, 2.0, 4.0, 8.0], "x_half": 3.0,
                   "start_resolution": [8, 16, 16], "n_per_start": 10}),
    _cfg("example51-counterexample", "example51",
         "Explicit transport counterexample: invariants, identity, integrability.",
         ["C11"], {"d": 2, "eps": 0.5, "q0": 2.0, "levels": [8, 16, 24, 32],
                   "alpha_violation": 0.8, "n_points": 1000}, process={}),
    _cfg("max-principle-sweep", "max_principle",
         "Monte Carlo bound for transport subsolutions across noise levels.",
         ["C12"], {"eps": [0.4, 0.2, 0.1], "p0": 3.0, "q0": 3.0, "p": 8.0, "nu": 20.0,
                   "nu_sweep": [5.0, 20.0, 80.0]}, process={}),
]}


def list_scenarios() -> list[tuple[str, str]]:
    return [(name, cfg["description"]) for name, cfg in sorted(BUILTIN.items())]


def describe(name: str) -> str:
    """YAML text of a built-in scenario."""
    if name not in BUILTIN:
        raise ConfigError(f"scenario: unknown built-in {name!r}")
    return yaml.safe_dump(BUILTIN[name], sort_keys=False)


# ---------------------------------------------------------------------------
# Runner


def run_scenario(config, out: str | Path | None = None,
                 overrides: dict | None = None) -> ScenarioResult:
    """Run one scenario and write its artifacts to ``out/<name>/``.

    Configuration problems raise :class:`ConfigError`; failures during the
    run are caught, recorded in ``failure.json`` next to whatever tables
    were already written, and reported with status ``"error"``.
    """
    sc = load_config(config, overrides)
    out_dir = None if out is None else Path(out) / sc.name
    sink = _Sink(out_dir, sc)
    sink.text("config.yaml", yaml.safe_dump(sc.to_config(), sort_keys=False))
    try:
        summary, verdicts = KINDS[sc.kind].run(sc, sink)
    except ConfigError:
        raise
    except Exception as exc:  # noqa: BLE001 - recorded as a failure artifact
        err = "".join(traceback.format_exception(type(exc), exc, exc.__traceback__))
        sink.text("failure.json", json_text({"scenario": sc.name, "error": repr(exc),
                                             "traceback": err,
                                             "partial": [p.name for p in sink.files]}))
        return ScenarioResult(sc.name, "error", [], out_dir, list(sink.files), {}, err)
    verdicts = [v for v in verdicts if not sc.criteria or v.criterion in sc.criteria]
    status = "pass" if all(v.passed for v in verdicts) else "fail"
    doc = {"scenario": sc.name, "kind": sc.kind, "status": status,
           "criteria": [v.to_dict() for v in verdicts], "seed": sc.seed, "h": sc.h,
           "n_paths": sc.n_paths, "result": summary}
    sink.text("summary.json", json_text(doc))
    return ScenarioResult(sc.name, status, verdicts, out_dir, list(sink.files), doc)
