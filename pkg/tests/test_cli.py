import csv
import json

import pytest

from schedshuffle.cli import EXIT_CONFIG, EXIT_MISS, EXIT_OK, main
from schedshuffle.model import TaskSet


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def corpus(tmp_path):
    out = tmp_path / "corpus"
    assert main(["gen", "--groups", "2,6", "--tasks-per-group", "5", "--out", str(out), "--seed", "3"]) == EXIT_OK
    return out


def test_gen_grid_size(tmp_path):
    out = tmp_path / "c"
    assert main(["gen", "--out", str(out)]) == EXIT_OK
    assert len(json.loads((out / "manifest.json").read_text())["sets"]) == 60


def test_gen_is_deterministic(tmp_path):
    for name in ("a", "b"):
        main(["gen", "--groups", "1", "--tasks-per-group", "5,7", "--out", str(tmp_path / name), "--seed", "8"])
    for f in sorted((tmp_path / "a").iterdir()):
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_run_and_analyze(tmp_path, corpus):
    runs = tmp_path / "runs"
    rc = main(["run", "--corpus", str(corpus), "--policy", "fp,tspp-approx", "--selection", "weighted",
               "--hyper-periods", "5", "--out", str(runs), "--save-distributions"])
    assert rc == EXIT_OK
    rows = read_csv(runs / "runs.csv")
    assert len(rows) == 4
    fp = [r for r in rows if r["method"] == "fp:weighted"]
    assert all(r["schedule_min_entropy"] == "0" for r in fp)
    assert len(list((runs / "runs").glob("*.dist.csv"))) == 4

    agg = tmp_path / "agg"
    assert main(["analyze", str(runs), "--out", str(agg)]) == EXIT_OK
    groups = read_csv(agg / "groups.csv")
    assert {(r["group"], r["method"]) for r in groups} == {
        ("2", "fp:weighted"), ("6", "fp:weighted"), ("2", "tspp-approx:weighted"), ("6", "tspp-approx:weighted")}
    assert all(r["zero_min_entropy_percent"] == "100" for r in groups if r["method"] == "fp:weighted")
    table = read_csv(agg / "zero_entropy_table.csv")
    assert list(table[0].keys()) == ["method", "[0.4, 0.5]", "[0.5, 0.6]", "[0.6, 0.7]", "[0.7, 0.8]",
                                     "[0.8, 0.9]", "[0.9, 1.0]"]
    assert len(read_csv(agg / "scatter.csv")) == 4


def test_analyze_empty_input(tmp_path):
    empty = tmp_path / "empty"
    (empty / "runs").mkdir(parents=True)
    assert main(["analyze", str(empty), "--out", str(tmp_path / "agg")]) == EXIT_OK
    assert read_csv(tmp_path / "agg" / "groups.csv") == []


def test_run_varying_exec_time(tmp_path, corpus):
    out = tmp_path / "vr"
    rc = main(["run", "--corpus", str(corpus), "--policy", "tspp-exact", "--exec-time", "uniform:0.7",
               "--hyper-periods", "3", "--out", str(out)])
    assert rc == EXIT_OK
    assert {r["method"] for r in read_csv(out / "runs.csv")} == {"tspp-exact:weighted@uniform:0.7"}


def test_workers_do_not_change_outputs(tmp_path, corpus):
    for name, workers in (("w1", "1"), ("w2", "2")):
        main(["run", "--corpus", str(corpus), "--policy", "ts", "--selection", "uniform", "--hyper-periods", "4",
              "--out", str(tmp_path / name), "--workers", workers])
    assert (tmp_path / "w1" / "runs.csv").read_bytes() == (tmp_path / "w2" / "runs.csv").read_bytes()


def test_strict_deadline_miss_exit_code(tmp_path, capsys):
    path = tmp_path / "bad.json"
    TaskSet.from_pairs([(4, 2), (6, 3)]).save(path)
    args = ["run", "--taskset", str(path), "--policy", "fp", "--hyper-periods", "2", "--out", str(tmp_path / "o")]
    assert main(args + ["--strict-deadlines"]) == EXIT_MISS
    assert "deadline miss" in capsys.readouterr().err
    assert main(args) == EXIT_OK
    assert "warning" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ["run", "--out", "x"],
    ["run", "--taskset", "missing.json", "--out", "x"],
    ["run", "--pairs-typo"],
    ["gen", "--groups", "12", "--out", "x"],
    ["oracle", "--pairs", "5:1,7"],
    ["oracle"],
])
def test_config_errors(tmp_path, monkeypatch, argv):
    monkeypatch.chdir(tmp_path)
    try:
        rc = main(argv)
    except SystemExit as exc:  # argparse usage errors
        rc = exc.code
    assert rc == EXIT_CONFIG


def test_bad_policy_name(tmp_path, corpus):
    assert main(["run", "--corpus", str(corpus), "--policy", "edf", "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_oracle_query(tmp_path, capsys):
    out = tmp_path / "or"
    rc = main(["oracle", "--pairs", "5:1,7:4", "--policy", "tspp-exact", "--selection", "uniform",
               "--query", "4:2", "--out", str(out)])
    assert rc == EXIT_OK
    assert "Pr(x_4 = 2) = 0.837191" in capsys.readouterr().out
    doc = json.loads((out / "oracle.json").read_text())
    assert doc["report"]["schedule_min_entropy"].startswith("0.20404")
    assert (out / "distribution.csv").read_text().startswith("slot,1,2,idle\n")


def test_oracle_refuses_large_sets(capsys):
    assert main(["oracle", "--pairs", "5:1,7:1,9:1,11:1"]) == EXIT_CONFIG
    assert "refused" in capsys.readouterr().err


def test_inspect(capsys):
    assert main(["inspect", "--pairs", "5:2,7:2,20:3"]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert [t["V_bar"] for t in doc["tasks"]] == [3, 1, 3]
