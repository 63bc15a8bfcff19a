import csv
import json

import numpy as np
import pytest

from cyclic_rca import bench
from cyclic_rca.bench import ExperimentConfig, ExperimentResult, emit_report, expand_grid, run_grid

SMALL = dict(p=6, m=60, delta=15.0, seed=3)


def test_config_defaults_and_validation():
    cfg = ExperimentConfig(p=7)
    assert cfg.sample_size == 70
    assert ExperimentConfig(p=7, m=33).sample_size == 33
    with pytest.raises(ValueError, match="unknown methods"):
        ExperimentConfig(methods=("magic",))
    with pytest.raises(ValueError):
        ExperimentConfig(p=0)
    with pytest.raises(ValueError):
        ExperimentConfig(p=3, n_root_causes=4)


def test_expand_grid_cartesian_product():
    spec = {"description": "x", "p": 8, "cyclic": [False, True], "delta": [5, 10, 20], "methods": ["zscore"]}
    grid = expand_grid(spec)
    assert len(grid) == 6
    assert [(c.cyclic, c.delta) for c in grid[:3]] == [(False, 5), (False, 10), (False, 20)]
    assert all(c.methods == ("zscore",) for c in grid)


def test_expand_grid_unknown_key():
    with pytest.raises(ValueError, match="unknown config keys"):
        expand_grid({"p": 5, "colour": "red"})


def test_presets_parse():
    from importlib.resources import files

    for f in files("cyclic_rca.presets").iterdir():
        if f.name.endswith(".json"):
            assert expand_grid(json.loads(f.read_text()))


def test_run_grid_is_deterministic():
    cfg = ExperimentConfig(replications=4, methods=("cyclic-inverse", "zscore"), **SMALL)
    a = run_grid(cfg)
    b = run_grid(cfg, threads=3)
    key = lambda r: (r.grid_id, r.replication, r.method, r.roots, r.ranks)
    assert sorted(map(key, a.records)) == sorted(map(key, b.records))


def test_csv_has_one_row_per_replication_and_method(tmp_path):
    cfg = ExperimentConfig(replications=10, methods=("cyclic-inverse", "cyclic-glasso", "zscore"), **SMALL)
    written = emit_report(run_grid(cfg), tmp_path)
    with open(written["csv"]) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 30
    assert set(rows[0]) == set(bench.CSV_FIELDS)
    agg = json.loads(written["json"].read_text())
    assert {r["method"] for r in agg} == {"cyclic-inverse", "cyclic-glasso", "zscore"}
    assert all(r["replications"] == 10 for r in agg)
    svg = written["svg"].read_text()
    assert svg.lstrip().startswith("<?xml") or "<svg" in svg[:500]
    for m in ("cyclic-inverse", "cyclic-glasso", "zscore"):
        assert m in svg


def test_emit_report_empty_result(tmp_path):
    with pytest.raises(ValueError, match="no replications"):
        emit_report(ExperimentResult([ExperimentConfig()]), tmp_path)


def test_method_failure_is_isolated(monkeypatch):
    def broken(*a, **k):
        raise RuntimeError("boom")

    monkeypatch.setattr(bench.baselines, "zscore_baseline", broken)
    res = run_grid(ExperimentConfig(replications=3, methods=("cyclic-inverse", "zscore"), **SMALL))
    bad = res.method_records("zscore")
    good = res.method_records("cyclic-inverse")
    assert all("boom" in r.error for r in bad)
    assert all(not r.error and r.worst_rank >= 1 for r in good)
    row = [r for r in res.aggregate() if r["method"] == "zscore"][0]
    assert row["failures"] == 3 and "median_rank" not in row


def test_records_carry_per_root_ranks():
    cfg = ExperimentConfig(p=8, n_root_causes=2, replications=3, methods=("zscore",), seed=1)
    for r in run_grid(cfg).records:
        assert len(r.ranks) == len(r.roots)
        assert r.worst_rank == max(r.ranks)


def test_cyclic_method_ranks_root_high_at_large_shift():
    cfg = ExperimentConfig(p=10, delta=20.0, replications=20, methods=("cyclic-inverse",), seed=4)
    ranks = run_grid(cfg).worst_ranks("cyclic-inverse")
    assert np.median(ranks) <= 2


def test_scenario_grid_point():
    cfg = ExperimentConfig(scenario_target="Website", replications=2, methods=("zscore",), m=200)
    res = run_grid(cfg)
    assert all(not r.error and r.roots for r in res.records)
