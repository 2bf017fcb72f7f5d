import csv
import io
import json

import numpy as np
import pytest

from graphstoiht.graph import grid_graph, write_edge_list
from graphstoiht.harness import (CSV_COLUMNS, WORKERS_ENV, ClassificationGrid, ExperimentSpec,
                                 HarnessError, Report, Row, read_dataset, run_classification,
                                 run_recovery_curve, run_sweep, trial_seeds, zscore)

SMALL = dict(trials=3, rows=6, cols=6, sparsities=(4,), max_epochs=30)


def _parse(report):
    return list(csv.DictReader(io.StringIO(report.to_csv())))


def test_spec_validation_and_defaults():
    spec = ExperimentSpec("recovery_curve")
    assert spec.grid[0] == 5 and spec.grid[-1] == 250
    assert ExperimentSpec("block_size").grid[-1] == 180
    with pytest.raises(HarnessError):
        ExperimentSpec("mystery")
    with pytest.raises(HarnessError):
        ExperimentSpec("noise", solvers=("CoSaMP",))
    with pytest.raises(HarnessError):
        ExperimentSpec("noise", trials=0)
    assert spec.config_hash() == ExperimentSpec("recovery_curve").config_hash()
    assert spec.config_hash() != ExperimentSpec("recovery_curve", seed=1).config_hash()


def test_trial_seeds_distinct():
    seen = {trial_seeds(0, t, m, 8) for t in range(10) for m in (20, 30)}
    assert len(seen) == 20
    assert trial_seeds(3, 1, 40, 8) == trial_seeds(3, 1, 40, 8)


def test_report_sorting_and_csv():
    rows = [Row((("m", 100),), "IHT", "p", 0.5), Row((("m", 20),), "IHT", "p", 1 / 3),
            Row((("fold", "all"),), "IHT", "auc", 1.0), Row((("fold", 2),), "IHT", "auc", 0.9)]
    out = Report(rows).to_csv().splitlines()
    assert out[0] == ",".join(CSV_COLUMNS)
    assert [line.split(",")[0] for line in out[1:]] == ["fold=2", "fold=all", "m=20", "m=100"]
    assert "0.333333333333" in out[3]


def test_recovery_curve_rows(tmp_path):
    spec = ExperimentSpec("recovery_curve", grid=(10, 40), solvers=("GraphIHT", "IHT"), **SMALL)
    report = run_recovery_curve(spec)
    rows = _parse(report)
    assert len(rows) == 4
    assert {r["metric"] for r in rows} == {"recovery_probability"}
    for r in rows:
        assert 0.0 <= float(r["value"]) <= 1.0
    path = report.write(tmp_path, "rec")
    manifest = json.loads((tmp_path / "rec.manifest.json").read_text())
    assert manifest["config_hash"] == spec.config_hash()
    assert path.read_text() == report.to_csv()


def test_recovery_deterministic_with_pool(monkeypatch):
    spec = ExperimentSpec("recovery_curve", grid=(20, 30), solvers=("GraphStoIHT",), seed=4, **SMALL)
    serial = run_recovery_curve(spec).to_csv()
    monkeypatch.setenv(WORKERS_ENV, "2")
    assert run_recovery_curve(spec).to_csv() == serial


def test_bad_worker_env(monkeypatch):
    monkeypatch.setenv(WORKERS_ENV, "many")
    with pytest.raises(HarnessError):
        run_recovery_curve(ExperimentSpec("recovery_curve", grid=(10,), **SMALL))


def test_block_size_sweep_curves():
    spec = ExperimentSpec("block_size", grid=(2, 8), m=30, solvers=("GraphStoIHT",),
                          **{**SMALL, "max_epochs": 6})
    rows = _parse(run_sweep(spec))
    assert len(rows) == 2 * 6
    assert rows[0]["point"] == "b=2;epoch=1"
    assert {r["metric"] for r in rows} == {"estimation_error"}


def test_learning_rate_sweep():
    spec = ExperimentSpec("learning_rate", grid=(0.5, 1.0), m=30, block_size=4,
                          solvers=("StoIHT",), **{**SMALL, "max_epochs": 4})
    rows = _parse(run_sweep(spec))
    assert {r["point"].split(";")[0] for r in rows} == {"eta=0.5", "eta=1"}


def test_noise_sweep_required_m():
    spec = ExperimentSpec("noise", grid=(4,), solvers=("GraphIHT",), noise_levels=(0.0,),
                          m_grid=(10, 60), **SMALL)
    report = run_sweep(spec)
    req = report.select("required_m")
    assert len(req) == 1
    probs = report.select("recovery_probability")
    if probs[-1].value == 1.0:
        assert req[0].value == probs[-1].point[-1][1]


def test_fixed_signal(tmp_path):
    g = grid_graph(4, 4)
    write_edge_list(g, tmp_path / "g.txt")
    x = np.zeros(16)
    x[[0, 1, 5]] = [1.0, -2.0, 0.5]
    (tmp_path / "x.txt").write_text("\n".join(map(str, x)))
    spec = ExperimentSpec("benchmark_graphs", grid=(30,), trials=2, solvers=("GraphIHT",),
                          graph_path=str(tmp_path / "g.txt"), signal_path=str(tmp_path / "x.txt"))
    rows = run_recovery_curve(spec).rows
    assert rows[0].point == (("m", 30), ("s", 3))
    (tmp_path / "x.txt").write_text("1 2 3")
    with pytest.raises(HarnessError):
        run_recovery_curve(spec)


def test_validation_tuning():
    spec = ExperimentSpec("recovery_curve", grid=(30,), solvers=("IHT",), validation_m=30,
                          validation_trials=2, eta_grid=(0.5, 1.0), **SMALL)
    report = run_recovery_curve(spec)
    assert report.manifest["learning_rates"]["IHT"] in (0.5, 1.0)


def test_read_dataset(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("label,a,b\n1,0.5,2\n-1,1.5,3\n\n")
    X, y = read_dataset(p)
    assert X.tolist() == [[0.5, 2.0], [1.5, 3.0]] and y.tolist() == [1.0, -1.0]
    p.write_text("1,0.5,2\n0,1,1\n")
    with pytest.raises(HarnessError, match=":2:"):
        read_dataset(p)
    p.write_text("1,0.5,2\n-1,1\n")
    with pytest.raises(HarnessError, match="expected 3"):
        read_dataset(p)


def test_zscore():
    X = np.array([[1.0, 5.0], [3.0, 5.0]])
    Z = zscore(X)
    assert np.allclose(Z[:, 0], [-1, 1]) and np.all(Z[:, 1] == 0)


def test_classification_pipeline(tmp_path):
    rng = np.random.default_rng(0)
    g = grid_graph(4, 4)
    X = rng.normal(size=(60, 16))
    y = np.where(X[:, 5] + X[:, 6] > 0, 1, -1)
    data = tmp_path / "d.csv"
    data.write_text("".join(f"{int(l)}," + ",".join(f"{v:.6f}" for v in row) + "\n"
                            for l, row in zip(y, X)))
    grid = ClassificationGrid(sparsities=(2, 4), lambdas=(1e-3,), block_fractions=(1.0,),
                              max_epochs=10)
    report = run_classification(data, g, cv=3, grid=grid, solvers=("GraphIHT",), inner_cv=2)
    agg = {r.metric: r.value for r in report.rows if r.point == (("fold", "all"),)}
    assert agg["auc"] > 0.8
    assert set(agg) == {"auc", "balanced_error", "support_size"}
    assert len(report.manifest["selections"]) == 3
    with pytest.raises(HarnessError):
        run_classification(data, grid_graph(3, 3), cv=3, grid=grid, solvers=("GraphIHT",))
