import filecmp
import json
import subprocess
import sys

import pytest

from rivetkey.cli import run


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert run(["gen", "--domain", "clean", "--count", "12", "--seed", "1", "--out", str(d / "data")]) == 0
    assert run(["split", "--manifest", str(d / "data/manifest.json"), "--ratio", "0.8",
                "--seed", "7", "--out", str(d / "split")]) == 0
    (d / "tiny.json").write_text(json.dumps({
        "epochs": 2, "batch_size": 4, "sigma_schedule": [[1, 3.0], [2, 1.5]],
        "model": {"input_size": 64, "stages": 3, "base_channels": 4}}))
    return d


def test_gen_contract(workdir, capsys):
    m = json.loads((workdir / "data/manifest.json").read_text())
    assert m["version"] == 1 and len(m["samples"]) == 12
    assert run(["gen", "--domain", "clean", "--count", "5", "--seed", "1",
                "--out", str(workdir / "five")]) == 0
    assert len(json.loads((workdir / "five/manifest.json").read_text())["samples"]) == 5
    assert "gen: wrote 5 clean samples" in capsys.readouterr().out


def test_gen_idempotent(workdir):
    run(["gen", "--domain", "clean", "--count", "12", "--seed", "1", "--out", str(workdir / "again")])
    assert filecmp.cmp(workdir / "data/manifest.json", workdir / "again/manifest.json", shallow=False)


def test_split_disjoint(workdir):
    tr = json.loads((workdir / "split/train.json").read_text())["samples"]
    te = json.loads((workdir / "split/test.json").read_text())["samples"]
    a, b = {s["config_id"] for s in tr}, {s["config_id"] for s in te}
    assert len(a) == 2 and len(b) == 1 and not a & b
    # image paths are rebased to the split directory
    assert all((workdir / "split" / s["image"]).exists() for s in tr)


def test_train_predict_eval_measure_render(workdir):
    d = workdir
    assert run(["train", "--config", str(d / "tiny.json"), "--train-manifest",
                str(d / "split/train.json"), "--out", str(d / "run")]) == 0
    assert (d / "run/pretrain.pt").exists() and (d / "run/pretrain.json").exists()
    log = [json.loads(x) for x in (d / "run/pretrain_log.jsonl").read_text().splitlines()]
    assert [r["sigma"] for r in log] == [3.0, 1.5]

    assert run(["finetune", "--config", str(d / "tiny.json"), "--init", str(d / "run/pretrain.pt"),
                "--train-manifest", str(d / "split/train.json"), "--out", str(d / "run")]) == 0
    assert (d / "run/finetune.pt").exists()

    assert run(["predict", "--ckpt", str(d / "run/finetune.pt"), "--manifest",
                str(d / "split/test.json"), "--out", str(d / "preds.json")]) == 0
    preds = json.loads((d / "preds.json").read_text())
    assert len(preds["predictions"]) == 4

    assert run(["eval", "--preds", str(d / "preds.json"), "--manifest", str(d / "split/test.json"),
                "--out", str(d / "report.json")]) == 0
    first = json.loads((d / "report.json").read_text())
    assert list(first) == ["pck", "mpjpe", "oks", "samples", "keypoints"]
    run(["eval", "--preds", str(d / "preds.json"), "--manifest", str(d / "split/test.json"),
         "--out", str(d / "report2.json")])
    assert json.loads((d / "report2.json").read_text()) == first

    assert run(["measure", "--manifest", str(d / "split/test.json"), "--out", str(d / "gt.json")]) == 0
    rows = json.loads((d / "gt.json").read_text())
    assert len(rows) == 4 and set(rows[0]) == {"id", "d_h_mm", "d_i_mm", "d_b_mm"}
    assert run(["measure", "--manifest", str(d / "split/test.json"), "--preds", str(d / "preds.json"),
                "--out", str(d / "pm.json")]) == 0

    assert run(["render", "--manifest", str(d / "split/test.json"), "--preds", str(d / "preds.json"),
                "--ckpt", str(d / "run/finetune.pt"), "--count", "1", "--out", str(d / "figs")]) == 0
    assert sorted(p.name for p in (d / "figs").iterdir()) == [
        f"{rows[0]['id']}_heatmaps.png", f"{rows[0]['id']}_overlay.png"]


def test_eval_unknown_id_exit_2(workdir):
    bad = {"version": 1, "checkpoint": "", "predictions": [
        {"id": "nope", "keypoints": [[0, 0]] * 6, "confidence": [0.5] * 6}]}
    (workdir / "bad.json").write_text(json.dumps(bad))
    assert run(["eval", "--preds", str(workdir / "bad.json"),
                "--manifest", str(workdir / "data/manifest.json")]) == 2


def test_exit_codes(workdir, tmp_path):
    assert run([]) == 1
    assert run(["gen", "--domain", "ct", "--count", "1", "--out", str(tmp_path)]) == 1
    assert run(["gen", "--domain", "clean", "--count", "0", "--out", str(tmp_path)]) == 1
    assert run(["split", "--manifest", str(workdir / "data/manifest.json"), "--ratio", "1.5",
                "--out", str(tmp_path)]) == 1
    assert run(["eval", "--preds", "x.json", "--manifest", "y.json", "--pck-thresholds", "a,b"]) == 1
    assert run(["split", "--manifest", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 2
    (tmp_path / "broken.json").write_text("{")
    assert run(["split", "--manifest", str(tmp_path / "broken.json"), "--out", str(tmp_path)]) == 2
    assert run(["predict", "--ckpt", str(tmp_path / "none.pt"), "--manifest",
                str(workdir / "data/manifest.json"), "--out", str(tmp_path / "p.json")]) == 2


def test_help_and_entry_point():
    assert run(["--help"]) == 0
    out = subprocess.run([sys.executable, "-m", "rivetkey", "eval", "--help"],
                         capture_output=True, text=True)
    assert out.returncode == 0 and "--pck-thresholds" in out.stdout
