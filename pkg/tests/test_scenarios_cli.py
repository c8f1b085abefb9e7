import csv
import json

import pytest
import yaml

from driftlab import cli
from driftlab.acceptance import determinism_check, run_acceptance
from driftlab.scenarios import BUILTIN, ConfigError, describe, list_scenarios, load_config, \
    run_scenario


def _cfg(**changes):
    cfg = yaml.safe_load(describe("bm2-exit-scaling"))
    cfg.update(changes)
    return cfg


SMALL = {"n_paths": 200, "h": 1e-2}


def test_registry_round_trips():
    names = [n for n, _ in list_scenarios()]
    assert names == sorted(BUILTIN)
    for n in names:
        sc = load_config(yaml.safe_load(describe(n)))
        assert sc.name == n and sc.seed == 20240611


@pytest.mark.parametrize("changes,key", [
    (dict(seed=None), "seed"),
    (dict(seed=-1), "seed"),
    (dict(schema_version=2), "schema_version"),
    (dict(kind="nope"), "kind"),
    (dict(extra=1), "extra"),
    (dict(budget={"n_paths": 1, "h": 1e-3}), "budget.n_paths"),
    (dict(budget={"n_paths": 100, "h": 0}), "budget.h"),
    (dict(budget={"n_paths": 100, "h": 1e-3, "steps": 3}), "budget.steps"),
    (dict(process={"d": 2, "drift": {"name": "no-such-drift"}}), "process.drift"),
    (dict(process={"d": 0}), "process.d"),
    (dict(process={"colour": 1}), "process.colour"),
])
def test_config_errors_name_the_key(changes, key):
    with pytest.raises(ConfigError) as info:
        load_config(_cfg(**changes))
    assert str(info.value).startswith(key + ":")


def test_overrides_and_unknown_name():
    sc = load_config("bm2-exit-scaling", {"seed": 7, "n_paths": 50, "h": 0.01})
    assert (sc.seed, sc.n_paths, sc.h) == (7, 50, 0.01)
    with pytest.raises(ConfigError):
        load_config("not-a-scenario")


def test_yaml_file_config(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump(_cfg(name="mine")))
    assert load_config(str(path)).name == "mine"
    path.write_text("a: [1,\n")
    with pytest.raises(ConfigError, match="config"):
        load_config(str(path))


def test_artifacts_carry_provenance(tmp_path):
    res = run_scenario("bm2-exit-scaling", tmp_path, SMALL)
    d = tmp_path / "bm2-exit-scaling"
    csvs = sorted(d.glob("*.csv"))
    assert csvs and (d / "summary.json").exists() and (d / "config.yaml").exists()
    for p in csvs:
        with open(p, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0][-3:] == ["seed", "h", "n_paths"]
        assert all(r[-3:] == ["20240611", "0.01", "200"] for r in rows[1:])
    summary = json.loads((d / "summary.json").read_text())
    assert summary["seed"] == 20240611 and "exponent_hat" in summary["result"]
    assert res.verdicts[0].criterion == "C2"


def test_byte_identical_reruns():
    r = determinism_check("bm2-exit-scaling", SMALL)
    assert r["identical"] and r["files"] == ["exit_scaling.csv"]
    # per-path exit records as well as summaries
    r = determinism_check("bm2-ball-exit", {"n_paths": 300, "h": 1e-3})
    assert r["identical"] and "exits.csv" in r["files"]


def test_seed_changes_output(tmp_path):
    run_scenario("bm2-exit-scaling", tmp_path / "a", SMALL)
    run_scenario("bm2-exit-scaling", tmp_path / "b", dict(SMALL, seed=1))
    a = (tmp_path / "a/bm2-exit-scaling/exit_scaling.csv").read_text()
    b = (tmp_path / "b/bm2-exit-scaling/exit_scaling.csv").read_text()
    assert a != b


def test_counterexample_scenario(tmp_path):
    res = run_scenario("example51-counterexample", tmp_path)
    doc = json.loads((tmp_path / "example51-counterexample/summary.json").read_text())
    assert res.status == "pass"
    assert doc["result"]["u0"] == 1.0
    assert doc["result"]["failed_hypothesis"] == "d/p0+1/q0 = 1"


def test_runtime_failure_is_recorded(tmp_path):
    res = run_scenario(_cfg(params={"radii": [1.0]}), tmp_path, SMALL)
    assert res.status == "error" and res.exit_code == 3
    doc = json.loads((tmp_path / "bm2-exit-scaling/failure.json").read_text())
    assert "traceback" in doc


def test_empty_suite_is_an_error():
    with pytest.raises(ValueError):
        run_acceptance("empty")
    with pytest.raises(KeyError):
        run_acceptance("no-such-suite")


def test_acceptance_subset_rows(tmp_path):
    rep = run_acceptance("desk", tmp_path, only=["C11"])
    assert [r.id for r in rep.rows] == ["C11"] and rep.exit_code == 0
    assert (tmp_path / "acceptance.csv").exists()


class TestCli:
    def test_list_and_describe(self, capsys):
        assert cli.main(["list-scenarios"]) == 0
        assert "bm2-ball-exit" in capsys.readouterr().out
        assert cli.main(["describe", "ito-suite"]) == 0
        assert "kind: ito_suite" in capsys.readouterr().out

    def test_pass_exit_zero(self, tmp_path):
        assert cli.main(["run", "example51-counterexample", "--out", str(tmp_path)]) == 0

    def test_failure_exit_one(self, tmp_path):
        # the resolvent slope criterion fails at any budget
        code = cli.main(["run", "bm2-resolvent", "--paths", "2048", "--step", "0.01",
                         "--out", str(tmp_path)])
        assert code == 1

    def test_config_errors_exit_two(self, tmp_path, capsys):
        assert cli.main(["run", "nope", "--out", str(tmp_path)]) == 2
        assert cli.main(["run", "bm2-exit-scaling", "--step", "-1", "--out", str(tmp_path)]) == 2
        assert "budget.h" in capsys.readouterr().err
        assert cli.main(["accept", "empty", "--out", str(tmp_path)]) == 2
        assert cli.main(["accept", "nosuite", "--out", str(tmp_path)]) == 2
        with pytest.raises(SystemExit) as info:
            cli.main(["frobnicate"])
        assert info.value.code == 2

    def test_runtime_error_exit_three(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text(yaml.safe_dump(_cfg(params={"radii": [1.0]})))
        code = cli.main(["run", str(path), "--paths", "100", "--step", "0.01",
                         "--out", str(tmp_path)])
        assert code == 3
        assert (tmp_path / "bm2-exit-scaling/failure.json").exists()
