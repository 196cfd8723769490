import csv
import json
import subprocess
import sys

import pytest

from tailforge.cli import main
from tailforge.data import ClassDistribution, read_manifest, synth_gaussian_dataset, write_manifest
from tailforge.errors import TrainingDiverged
from tailforge.tensor import read_ltt1

TINY = "epochs_phase1 = 3\nepochs_phase2 = 2\nhidden_dim = 16\n"


def _json_out(capsys):
    return json.loads(capsys.readouterr().out.strip().splitlines()[-1])


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "tiny.conf").write_text(TINY)
    assert main(["synth", "--classes", "6", "--n-max", "40", "--n-min", "2", "--test-per-class", "5",
                 "--seed", "1", "--out", str(root / "data")]) == 0
    assert main(["train", "--manifest", str(root / "data"), "--config", str(root / "tiny.conf"),
                 "--out", str(root / "run")]) == 0
    return root


def test_make_longtail_food_shape(capsys):
    assert main(["make-longtail", "101", "750", "5", "--alpha", "6"]) == 0
    out = _json_out(capsys)
    assert (out["max"], out["min"], out["imbalance_ratio"]) == (750, 5, 150.0)
    assert (out["head"], out["tail"]) == (28, 73)


def test_make_longtail_from_frequencies(tmp_path, capsys):
    freq = tmp_path / "freq.csv"
    freq.write_text("class_id,frequency\n0,2.88\n1,0.5\n2,0.01\n")
    assert main(["make-longtail", "--frequencies", str(freq), "--original-counts", "288",
                 "--out", str(tmp_path / "lt")]) == 0
    out = _json_out(capsys)
    assert out["imbalance_ratio"] == 288.0
    rows = list(csv.DictReader(open(tmp_path / "lt" / "distribution.csv")))
    assert [int(r["count"]) for r in rows] == [288, 50, 1]


def test_make_longtail_subsamples_manifest(tmp_path, capsys):
    balanced = synth_gaussian_dataset(ClassDistribution((12,) * 6, test_per_class=2), 4, seed=0)
    write_manifest(balanced, tmp_path / "src")
    assert main(["make-longtail", "6", "10", "2", "--manifest", str(tmp_path / "src"),
                 "--out", str(tmp_path / "sub"), "--seed", "3"]) == 0
    ds = read_manifest(tmp_path / "sub")
    assert sorted(ds.distribution.counts, reverse=True) == sorted(_json_out(capsys)["counts"], reverse=True)
    assert len(ds.test_indices()) == 12


def test_train_outputs(workspace):
    run = workspace / "run"
    for name in ("teacher.ltt1", "student.ltt1", "log.csv", "embeddings.ltt1", "results.csv"):
        assert (run / name).is_file()
    rows = list(csv.DictReader(open(run / "log.csv")))
    assert list(rows[0]) == ["epoch", "phase", "loss_ce", "loss_kd", "lr"]
    assert [r["phase"] for r in rows] == ["1"] * 3 + ["2"] * 2
    assert read_ltt1(run / "embeddings.ltt1").shape[1] == 16


def test_select_then_augment(workspace, capsys):
    sel = workspace / "selection.csv"
    assert main(["select", "--manifest", str(workspace / "data"), "--embeddings",
                 str(workspace / "run" / "embeddings.ltt1"), "--out", str(sel)]) == 0
    summary = _json_out(capsys)
    assert summary["kept"] == summary["head_classes"] * summary["budget"]
    out = workspace / "aug"
    assert main(["augment", "--manifest", str(workspace / "data"), "--selection", str(sel),
                 "--teacher", str(workspace / "run" / "teacher.ltt1"), "--k", "2", "--preview", "2",
                 "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out / "recipes.csv")))
    assert rows and list(rows[0]) == ["base_id", "source_ids", "mask_rects", "label_weights"]
    for r in rows:
        assert len(r["source_ids"].split(";")) == 2 == len(r["mask_rects"].split(";"))
        assert sum(float(p.split(":")[1]) for p in r["label_weights"].split(";")) == pytest.approx(1, abs=1e-5)
    assert len(list((out / "preview").iterdir())) == 2


def test_eval_matches_train_report(workspace, tmp_path):
    assert main(["eval", "--manifest", str(workspace / "data"), "--model",
                 str(workspace / "run" / "student.ltt1"), "--out", str(tmp_path)]) == 0
    a = list(csv.DictReader(open(tmp_path / "results.csv")))[0]
    b = list(csv.DictReader(open(workspace / "run" / "results.csv")))[0]
    assert (a["head"], a["tail"], a["overall"]) == (b["head"], b["tail"], b["overall"])


def test_bench_and_report(workspace, tmp_path, capsys):
    args = ["bench", "--config", str(workspace / "tiny.conf"), "--seeds", "0-1", "--strategies", "baseline,hus",
            "--classes", "5", "--n-max", "30", "--test-per-class", "4", "--out", str(tmp_path)]
    assert main(args) == 0
    rows = list(csv.DictReader(open(tmp_path / "results.csv")))
    assert [(r["strategy"], r["seed"]) for r in rows] == [
        ("baseline", "0"), ("baseline", "1"), ("baseline", "mean"), ("hus", "0"), ("hus", "1"), ("hus", "mean")]
    capsys.readouterr()
    assert main(["report", str(tmp_path), "--reference", "baseline"]) == 0
    table = capsys.readouterr().out
    assert table.splitlines()[0].split() == ["strategy", "head", "tail", "overall"]


@pytest.mark.parametrize("argv, code", [
    (["make-longtail", "1", "2", "3"], 1),
    (["make-longtail", "5", "3", "10"], 1),
    (["select", "--manifest", "/nonexistent", "--out", "x.csv"], 1),
    (["bench", "--strategies", "nope"], 1),
    (["report", "/nonexistent"], 1),
])
def test_validation_errors_exit_1(argv, code, capsys):
    assert main(argv) == code
    assert "error" in capsys.readouterr().err


def test_bad_config_key_exits_1(tmp_path):
    bad = tmp_path / "bad.conf"
    bad.write_text("bogus = 1\n")
    assert main(["bench", "--config", str(bad)]) == 1


def test_diverged_training_exits_2(workspace, tmp_path, monkeypatch):
    import tailforge.pipeline as pipeline

    def blow_up(*a, **kw):
        raise TrainingDiverged("non-finite loss", {"epoch": 0})

    monkeypatch.setattr(pipeline, "train_phase1", blow_up)
    assert main(["train", "--manifest", str(workspace / "data"), "--out", str(tmp_path / "r")]) == 2


def test_unwritable_output_exits_2(workspace, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["eval", "--manifest", str(workspace / "data"), "--model",
                 str(workspace / "run" / "student.ltt1"), "--out", str(blocker)]) == 2


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "tailforge", "make-longtail", "20", "200", "2"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and json.loads(res.stdout)["total"] == 681
