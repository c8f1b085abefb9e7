"""Acceptance suites: named lists of criteria, each backed by scenarios."""

from __future__ import annotations

import filecmp
import tempfile
import time
import traceback
from dataclasses import dataclass, field
from pathlib import Path

from .report import json_text, table_text
from .scenarios import BUILTIN, run_scenario

__all__ = ["Criterion", "CriterionRow", "AcceptanceReport", "SUITES", "run_acceptance",
           "determinism_check"]


@dataclass(frozen=True)
class Criterion:
    id: str
    title: str
    scenarios: tuple       # built-in scenario names; all must pass
    target: str


DETERMINISM_SCENARIO = "bm2-exit-scaling"

DESK = (
    Criterion("C1", "Ball-exit mean vs 1/d", ("bm2-ball-exit",), "0.5"),
    Criterion("C2", "Exit-time scaling exponent", ("bm2-exit-scaling", "drift-exit-scaling"),
              "2 +- 0.15"),
    Criterion("C3", "Gaussian tail fit and rescaling", ("bm2-tail-bound",),
              "c_hat > 0, R^2 >= 0.95, z <= 3"),
    Criterion("C4", "Modulus moment ratios", ("bm2-modulus",), "spread <= 15%"),
    Criterion("C5", "Green mass and pairings", ("bm2-green-pairing",), "|z| <= 3"),
    Criterion("C6", "3D spatial Green vs kernel", ("bm3-spatial-green",), "within 10%"),
    Criterion("C7", "Reverse-Hoelder sweep", ("bm2-reverse-holder",), "max/min <= 2"),
    Criterion("C8", "Dual-norm slope in lam", ("bm2-dual-norm-slope",), "-1/3 +- 0.3"),
    Criterion("C9", "Ito residual suite", ("ito-suite",), "|mean| <= 3 SE"),
    Criterion("C10", "Resolvent norm decay", ("bm2-resolvent",), "-1 +- 0.15"),
    Criterion("C11", "Transport counterexample integrity", ("example51-counterexample",),
              "all checks"),
    Criterion("C12", "Maximum-principle constant vs eps", ("max-principle-sweep",),
              "spread <= 2"),
    Criterion("C13", "Byte-identical reruns", (DETERMINISM_SCENARIO,), "identical CSVs"),
)

SUITES: dict[str, tuple] = {"desk": DESK, "empty": ()}


@dataclass
class CriterionRow:
    id: str
    title: str
    estimate: str
    target: str
    tolerance: str
    verdict: str            # "pass", "fail" or "error"
    runtime: float
    detail: str = ""

    def line(self) -> str:
        return (f"{self.id:>4} {self.verdict.upper():5} {self.title}: estimate {self.estimate}, "
                f"target {self.target} ({self.tolerance}) [{self.runtime:.1f}s]"
                + (f" {self.detail}" if self.detail else ""))


@dataclass
class AcceptanceReport:
    suite: str
    rows: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.verdict == "pass" for r in self.rows)

    @property
    def crashed(self) -> bool:
        return any(r.verdict == "error" for r in self.rows)

    @property
    def exit_code(self) -> int:
        return 0 if self.passed else (3 if self.crashed else 1)

    header = ("criterion", "title", "estimate", "target", "tolerance", "verdict", "runtime_s")

    def table(self) -> str:
        return table_text(self.header, [[r.id, r.title, r.estimate, r.target, r.tolerance,
                                         r.verdict, round(r.runtime, 1)] for r in self.rows])

    def text(self) -> str:
        return "\n".join(r.line() for r in self.rows)


def _fmt(v) -> str:
    return format(v, ".6g") if isinstance(v, float) else str(v)


def determinism_check(name: str = DETERMINISM_SCENARIO, overrides: dict | None = None) -> dict:
    """Run ``name`` twice into fresh directories and compare every CSV."""
    with tempfile.TemporaryDirectory() as a, tempfile.TemporaryDirectory() as b:
        ra = run_scenario(name, a, overrides)
        rb = run_scenario(name, b, overrides)
        files = sorted(p.name for p in Path(a, name).glob("*.csv"))
        same = [filecmp.cmp(Path(a, name, f), Path(b, name, f), shallow=False) for f in files]
        also = sorted(p.name for p in Path(b, name).glob("*.csv"))
    ok = bool(files) and files == also and all(same) and ra.status != "error" \
        and rb.status != "error"
    return {"files": files, "identical": ok}


def run_acceptance(suite: str = "desk", out: str | Path | None = None,
                   overrides: dict | None = None, only=None, echo=None) -> AcceptanceReport:
    """Run every criterion of ``suite``; one row per criterion.

    ``only`` restricts to a subset of criterion ids; ``echo`` is called with
    each row's line as soon as it is known.
    """
    if suite not in SUITES:
        raise KeyError(f"unknown suite {suite!r}; known: {sorted(SUITES)}")
    criteria = [c for c in SUITES[suite] if only is None or c.id in only]
    if not criteria:
        raise ValueError(f"suite {suite!r} has no criteria to run")
    report = AcceptanceReport(suite)
    for c in criteria:
        t0 = time.perf_counter()
        try:
            if c.id == "C13":
                res = determinism_check(c.scenarios[0], overrides)
                row = CriterionRow(c.id, c.title, f"{len(res['files'])} CSV files", c.target,
                                   "byte-identical", "pass" if res["identical"] else "fail",
                                   0.0)
            else:
                ests, tols, verdict, notes = [], [], "pass", []
                for name in c.scenarios:
                    if name not in BUILTIN:
                        raise KeyError(f"criterion {c.id} names unknown scenario {name!r}")
                    r = run_scenario(name, out, overrides)
                    if r.status == "error":
                        verdict = "error"
                        notes.append(f"{name}: {r.error.strip().splitlines()[-1]}")
                        continue
                    mine = [v for v in r.verdicts if v.criterion == c.id]
                    if not mine:
                        raise RuntimeError(f"scenario {name} produced no verdict for {c.id}")
                    for v in mine:
                        ests.append(_fmt(v.estimate))
                        tols.append(v.tolerance)
                        if v.note:
                            notes.append(v.note)
                        if not v.passed and verdict == "pass":
                            verdict = "fail"
                row = CriterionRow(c.id, c.title, "; ".join(ests) or "n/a", c.target,
                                   tols[0] if tols else "", verdict, 0.0, "; ".join(notes))
        except Exception as exc:  # noqa: BLE001 - the crash is attached to the row
            row = CriterionRow(c.id, c.title, "n/a", c.target, "", "error", 0.0,
                               "".join(traceback.format_exception_only(type(exc), exc)).strip())
        row.runtime = time.perf_counter() - t0
        report.rows.append(row)
        if echo is not None:
            echo(row.line())
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "acceptance.csv").write_text(report.table(), encoding="utf-8")
        (out / "acceptance.json").write_text(
            json_text({"suite": suite, "passed": report.passed,
                       "rows": [r.__dict__ for r in report.rows]}), encoding="utf-8")
    return report
