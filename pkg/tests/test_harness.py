import json
import math

import numpy as np
import pytest

from housesweep import cli
from housesweep.harness import (PRESETS, ExperimentConfig, ResultRow, ResultTable, StatSpec,
                                convergence_report, preset, run_experiment)

SMALL = dict(N=[200, 400, 800], replicates=6, seed=5)


def table_from(medians, stat="x", ses=None, target="zero", threshold=None, asserted=True):
    cfg = preset("drawdowns", N=[10 ** (k + 2) for k in range(len(medians))])
    cfg.statistics = {stat: StatSpec(target, threshold, asserted)}
    rows = []
    for i, m in enumerate(medians):
        se = ses[i] if ses else 0.0
        rows.append(ResultRow(cfg.N[i], stat, m, m, se, m, m, m, 10, 0))
    return ResultTable(cfg, rows)


def test_constant_table_above_threshold_fails():
    [v] = convergence_report([table_from([0.3, 0.3, 0.3], threshold=0.1)])
    assert v.verdict == "FAIL"


def test_decreasing_table_below_threshold_passes():
    [v] = convergence_report([table_from([0.3, 0.2, 0.05], threshold=0.1)])
    assert v.verdict == "PASS"


def test_slack_of_one_se():
    [v] = convergence_report([table_from([0.3, 0.31, 0.2], ses=[0.02, 0.02, 0.02])])
    assert v.verdict == "PASS"
    [v] = convergence_report([table_from([0.3, 0.35, 0.2], ses=[0.02, 0.02, 0.02])])
    assert v.verdict == "FAIL"


def test_numeric_target_and_report_only():
    [v] = convergence_report([table_from([1.9, 1.7, 1.62], target=1.6, threshold=0.32)])
    assert v.verdict == "PASS"
    [v] = convergence_report([table_from([0.1, 0.2, 0.3], asserted=False)])
    assert v.verdict == "REPORT"


def test_insufficient_grid():
    with pytest.raises(ValueError):
        convergence_report([table_from([0.3, 0.2])])


def test_config_validation_and_roundtrip(tmp_path):
    cfg = preset("fixation-time")
    again = ExperimentConfig.from_dict(json.loads(cfg.to_json()))
    assert again.to_json() == cfg.to_json()
    with pytest.raises(ValueError):
        preset("fixation-time", N=[1])
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({**PRESETS["fixation-time"], "schema_version": 99})
    with pytest.raises(KeyError):
        preset("nope")


def test_presets_name_a_claim():
    for name, d in PRESETS.items():
        assert d["claim"] and d["experiment"] == name


def test_zero_replicates_warns(tmp_path):
    with pytest.warns(UserWarning):
        t = run_experiment(preset("drawdowns", replicates=0, out=str(tmp_path)))
    assert t.rows == []


def test_row_statistics():
    r = ResultRow.from_values(10, "s", np.array([1.0, 2.0, 3.0, np.nan]))
    assert r.median == 2.0 and r.n == 3 and r.n_failed == 1
    assert r.se == pytest.approx(1.0 / math.sqrt(3))


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_determinism_across_threads(name, tmp_path):
    over = dict(SMALL, replicates=3 if name in ("pit-vs-moran", "house-distance") else 6)
    a = run_experiment(preset(name, threads=1, out=str(tmp_path / "a"), **over))
    b = run_experiment(preset(name, threads=3, out=str(tmp_path / "b"), **over))
    fa = (tmp_path / "a" / f"{name}.csv").read_bytes()
    fb = (tmp_path / "b" / f"{name}.csv").read_bytes()
    assert fa == fb and a.to_csv() == b.to_csv()
    back = ResultTable.from_csv(fa.decode(), a.config)
    assert back.to_csv() == a.to_csv()


def test_grid_order_does_not_matter(tmp_path):
    a = run_experiment(preset("drawdowns", N=[200, 400, 800], replicates=4, seed=2), persist=False)
    b = run_experiment(preset("drawdowns", N=[800, 200, 400], replicates=4, seed=2), persist=False)
    for N in (200, 400, 800):
        assert np.array_equal(a.values[(N, "lil")], b.values[(N, "lil")])


def test_cli_run_report_and_env(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("HOUSESWEEP_OUT", str(tmp_path))
    code = cli.main(["walks", "--grid", "200,400,800", "--replicates", "4", "--seed", "1"])
    assert code in (0, 1)
    assert (tmp_path / "drawdowns.csv").exists() and (tmp_path / "drawdowns.json").exists()
    out = capsys.readouterr().out
    assert "drawdowns/lil" in out
    assert cli.main(["report"]) == code


def test_cli_config_file_and_exit_code(tmp_path):
    cfg = preset("drawdowns", N=[200, 400, 800], replicates=3).to_dict()
    cfg["statistics"] = {"lil": {"target": "zero", "threshold": 1e-9}}
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg))
    assert cli.main(["walks", "--config", str(path), "--out", str(tmp_path)]) == 1
    cfg["statistics"] = {"lil": {"target": "zero", "threshold": 10.0}}
    path.write_text(json.dumps(cfg))
    doc_code = cli.main(["walks", "--config", str(path), "--out", str(tmp_path)])
    summary = json.loads((tmp_path / "drawdowns.json").read_text())
    assert summary["schema_version"] == 1 and summary["claim"]
    assert doc_code == (0 if summary["verdicts"][0]["verdict"] == "PASS" else 1)


def test_cli_rejects_bad_grid():
    with pytest.raises(SystemExit):
        cli.main(["walks", "--grid", "abc"])
