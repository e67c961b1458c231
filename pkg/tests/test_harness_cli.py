import csv
import json

import pytest

from bracketlab.cli import main
from bracketlab.experiments import run_experiment
from bracketlab.harness import (PROFILES, ConfigError, ExperimentConfig, ResultTable, Row, Tolerance, emit_report,
                                write_table)


def test_tolerance_modes():
    assert Tolerance("exact").check("c/2", "c/2", None)
    assert not Tolerance("exact").check(1, 2, None)
    assert Tolerance("close", rel=0.1).check(1.05, 1.0, None)
    assert not Tolerance("close", rel=0.01).check(1.05, 1.0, None)
    assert Tolerance("close", sigmas=3).check(1.05, 1.0, 0.02)
    assert Tolerance("below").check(0.5, 1.0, None) and not Tolerance("below").check(1.0, 1.0, None)
    assert Tolerance("at_least").check(1.0, 1.0, None)
    assert Tolerance("within", abs=0.15).check(0.9, 1.0, None)
    assert not Tolerance("close", rel=1).check(float("nan"), 1.0, None)
    with pytest.raises(ValueError):
        Tolerance("sideways").check(1, 1, None)


def test_strict_profile_is_tighter():
    assert PROFILES["strict"]["mc10"].rel < PROFILES["default"]["mc10"].rel


def test_rows_need_provenance_and_rule():
    with pytest.raises(ValueError):
        Row("x", estimate=1.0, prediction=1.0, rule="exact")
    with pytest.raises(ValueError):
        Row("x", estimate=1.0, prediction=1.0, provenance="PAPER")
    with pytest.raises(ValueError):
        ResultTable().add(Row("x", estimate=1.0, prediction=1.0, provenance="PAPER", rule="nope"))


def test_table_gating():
    t = ResultTable()
    t.add(Row("a", estimate=1.0))
    t.add(Row("b", estimate=1.0, prediction=1.0, provenance="PAPER", rule="exact"))
    assert t.all_pass and len(t.gated) == 1
    t.add(Row("c", estimate=2.0, prediction=1.0, provenance="DERIVED", rule="rel1pct"))
    assert not t.all_pass
    assert "c: FAIL" in t.summary_lines()[-1]


@pytest.mark.parametrize("change, path", [
    ({"mollifiers": ["gaussian"]}, "model.mollifiers[0]"),
    ({"eps_ladder": [1e-3, 1e-2]}, "model.eps_ladder"),
    ({"eps_ladder": [1e-2, -1.0]}, "model.eps_ladder[1]"),
    ({"hurst": 0.4}, "model.hurst"),
    ({"samples": 10}, "mc.samples"),
    ({"workers": 0}, "mc.workers"),
    ({"kind": "plot"}, "kind"),
    ({"tolerance_profile": "lax"}, "tolerance_profile"),
])
def test_config_validation_names_the_field(change, path):
    with pytest.raises(ConfigError) as err:
        ExperimentConfig(**{"kind": "kernels", **change})
    assert err.value.path == path
    assert str(err.value).startswith(path + ":")


def test_config_json_roundtrip_and_unknown_fields():
    cfg = ExperimentConfig("constant-c", eps_ladder=[1e-2, 1e-3], options={"delta": 0.5}, seed=4)
    again = ExperimentConfig.from_json(json.dumps(cfg.to_json()))
    assert again == cfg
    bad = cfg.to_json()
    bad["model"]["hurts"] = 0.1
    with pytest.raises(ConfigError, match="model.hurts"):
        ExperimentConfig.from_json(bad)
    with pytest.raises(ConfigError, match="colour"):
        ExperimentConfig.from_json({"kind": "kernels", "colour": 1})


def test_empty_table_writes_header_only_files(tmp_path):
    paths = write_table(ResultTable(), tmp_path, "empty")
    assert paths["csv"].read_text().strip() == ",".join(ResultTable.COLUMNS)
    assert json.loads(paths["json"].read_text())["rows"] == []
    assert emit_report(ResultTable(), tmp_path, "empty-report") == 0


def test_mixed_results_exit_nonzero(tmp_path):
    t = ResultTable([Row("good", estimate=1, prediction=1, provenance="TRIVIAL", rule="exact"),
                     Row("bad", estimate=2, prediction=1, provenance="TRIVIAL", rule="exact")])
    assert emit_report({"mixed": t}, tmp_path) == 1
    side = json.loads((tmp_path / "report.json").read_text())
    assert side["passed"] == 1 and side["failed"] == 1 and not side["all_pass"]
    assert "1 of 2 gates pass" in (tmp_path / "report.md").read_text()


def test_experiment_output_is_deterministic(tmp_path):
    cfg = ExperimentConfig("constant-c", eps_ladder=[1e-2, 1e-3], out_dir=str(tmp_path / "a"))
    run_experiment(cfg)
    run_experiment(ExperimentConfig(**{**cfg.__dict__, "out_dir": str(tmp_path / "b")}))
    assert (tmp_path / "a" / "constant-c.csv").read_bytes() == (tmp_path / "b" / "constant-c.csv").read_bytes()


def test_monte_carlo_output_is_independent_of_workers(tmp_path):
    base = dict(kind="mc-moments", eps_ladder=[0.05], samples=100, batch=30,
                options={"factors": ["12", "12"], "grid_log2": 9})
    a = run_experiment(ExperimentConfig(**base, workers=1), write=False).to_csv()
    b = run_experiment(ExperimentConfig(**base, workers=2), write=False).to_csv()
    assert a == b


def test_cli_kernels(tmp_path):
    out = tmp_path / "k.csv"
    assert main(["kernels", "--eps", "0.01", "--out", str(out), "--out-dir", str(tmp_path)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert rows[0]["t"] == "0.0" and float(rows[0]["K"]) == pytest.approx(231.1509329149172)
    assert (tmp_path / "kernels.json").exists() and (tmp_path / "kernels.md").exists()


def test_cli_unknown_mollifier_is_a_config_error(tmp_path, capsys):
    assert main(["constant-c", "--mollifier", "gaussian", "--out-dir", str(tmp_path)]) == 2
    assert "model.mollifiers[0]" in capsys.readouterr().err


def test_cli_limit_moment_and_reduce(tmp_path):
    assert main(["limit-moment", "1212", "--out-dir", str(tmp_path)]) == 0
    assert "c/2" in (tmp_path / "limit-moment.csv").read_text()
    assert main(["reduce", "--diagram", "cutoff-first", "--out-dir", str(tmp_path)]) == 0
    assert "CHI_LINKED" in (tmp_path / "reduce.csv").read_text()


def test_cli_config_file(tmp_path):
    cfg = {"schema_version": 1, "kind": "limit-moment", "options": {"factors": ["12", "21"]},
           "outputs": {"out_dir": str(tmp_path), "stem": "cov"}}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    assert main(["run", str(path)]) == 0
    assert "-c" in (tmp_path / "cov.csv").read_text()


def test_cli_report_on_exact_gates(tmp_path, capsys):
    assert main(["report", "--gates", "AC3,AC7,AC8", "--out-dir", str(tmp_path)]) == 0
    lines = [l for l in capsys.readouterr().out.splitlines() if l.startswith("AC")]
    assert [l.split()[:2] for l in lines] == [["AC3", "PASS:"], ["AC7", "PASS:"], ["AC8", "PASS:"]]
    side = json.loads((tmp_path / "report.json").read_text())
    assert side["all_pass"]


def test_cli_report_fails_on_a_failing_gate(tmp_path, capsys):
    # the H=1/4 limit is zero, so this gate cannot pass
    assert main(["report", "--gates", "AC1", "--out-dir", str(tmp_path)]) == 1
    assert "AC1 FAIL" in capsys.readouterr().out
