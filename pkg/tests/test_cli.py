import json
import subprocess
import sys

import numpy as np
import pytest

from cyclic_rca.cli import main


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def simulated(tmp_path, capsys):
    code, out, _ = run(["simulate", "--p", "6", "--cyclic", "--delta", "20", "--seed", "2", "--out", str(tmp_path)], capsys)
    assert code == 0
    return tmp_path, json.loads(out)


def test_simulate_writes_files(simulated):
    path, info = simulated
    for name in ("sem.json", "normal.csv", "anomalous.csv", "ground_truth.json"):
        assert (path / name).exists()
    assert len(info["root_causes"]) == 1
    truth = json.loads((path / "ground_truth.json").read_text())
    assert truth["deltas"] == [20.0]


@pytest.mark.parametrize("method", ["cyclic-inverse", "cyclic-glasso", "zscore", "cholesky", "ridge", "lasso"])
def test_analyze_every_method(simulated, capsys, method):
    path, _ = simulated
    code, out, _ = run(
        ["analyze", "--normal", str(path / "normal.csv"), "--anomalous", str(path / "anomalous.csv"), "--method", method],
        capsys,
    )
    assert code == 0
    d = json.loads(out)
    assert sorted(d["ranks"]) == list(range(1, 7))
    assert len(d["labels"]) == 6


def test_analyze_finds_simulated_root(simulated, capsys):
    path, info = simulated
    code, out, _ = run(
        ["analyze", "--normal", str(path / "normal.csv"), "--anomalous", str(path / "anomalous.csv"),
         "--method", "cyclic-inverse"],
        capsys,
    )
    d = json.loads(out)
    top = int(np.argmin(d["ranks"]))
    # the transformed outlier is nonzero on the root and its parents
    sem = json.loads((path / "sem.json").read_text())
    root = info["root_causes"][0]
    allowed = {root} | {e["from"] for e in sem["edges"] if e["to"] == root}
    assert top in allowed


def test_analyze_route(simulated, capsys):
    path, info = simulated
    label = info["observable_root_causes"][0]
    code, out, _ = run(
        ["analyze", "--normal", str(path / "normal.csv"), "--anomalous", str(path / "anomalous.csv"),
         "--method", "cyclic-inverse", "--route", label],
        capsys,
    )
    assert code == 0
    assert isinstance(json.loads(out)["route"], list)


def test_usage_errors_exit_1(simulated, capsys):
    path, _ = simulated
    assert run(["analyze", "--normal", str(path / "normal.csv")], capsys)[0] == 1
    assert run(["nonsense"], capsys)[0] == 1
    assert run([], capsys)[0] == 1
    code, _, err = run(["analyze", "--normal", str(path / "normal.csv"), "--anomalous",
                        str(path / "anomalous.csv"), "--row", "5"], capsys)
    assert code == 1 and "out of range" in err
    assert run(["simulate", "--p", "1", "--out", str(path)], capsys)[0] == 1


def test_runtime_errors_exit_2(tmp_path, capsys):
    code, _, err = run(["analyze", "--normal", str(tmp_path / "nope.csv"), "--anomalous", str(tmp_path / "x.csv")], capsys)
    assert code == 2 and err


def test_bench_command(tmp_path, capsys):
    cfg = tmp_path / "grid.json"
    cfg.write_text(json.dumps({"description": "tiny", "p": 5, "delta": [10, 20], "replications": 2,
                               "methods": ["zscore", "cyclic-inverse"]}))
    code, out, _ = run(["bench", "--config", str(cfg), "--out", str(tmp_path / "res")], capsys)
    assert code == 0
    assert set(json.loads(out)) == {"csv", "json", "svg"}
    assert len((tmp_path / "res" / "results.csv").read_text().strip().splitlines()) == 1 + 2 * 2 * 2


def test_bench_bad_config_is_usage_error(tmp_path, capsys):
    cfg = tmp_path / "grid.json"
    cfg.write_text("{not json")
    assert run(["bench", "--config", str(cfg), "--out", str(tmp_path)], capsys)[0] == 1
    cfg.write_text(json.dumps({"p": 5, "bogus": 1}))
    assert run(["bench", "--config", str(cfg), "--out", str(tmp_path)], capsys)[0] == 1


def test_ingest_command(tmp_path, capsys):
    rng = np.random.default_rng(0)
    a, b = rng.standard_normal((2, 40))
    rows = ["a,a2,b,flat"] + [f"{x},{2 * x},{y},1" for x, y in zip(a, b)]
    (tmp_path / "n.csv").write_text("\n".join(rows) + "\n")
    (tmp_path / "x.csv").write_text("a,a2,b,flat\n3,6,0,1\n")
    code, out, _ = run(["ingest", "--normal", str(tmp_path / "n.csv"), "--anomalous", str(tmp_path / "x.csv"),
                        "--out", str(tmp_path / "o")], capsys)
    assert code == 0
    assert json.loads(out)["final_dim"] == 2
    report = json.loads((tmp_path / "o" / "report.json").read_text())
    assert report["dropped_constant"] == ["flat"]


def test_console_entry_point_help():
    res = subprocess.run([sys.executable, "-m", "cyclic_rca.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("simulate", "analyze", "bench", "ingest"):
        assert cmd in res.stdout
