import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from caveline.cli import main


@pytest.fixture
def runner():
    return CliRunner()


def micro_train_json(path, max_epochs=1):
    doc = {
        "optimizer": {"learning_rate": 0.001},
        "batch_size": 2,
        "max_epochs": max_epochs,
        "augmentation": {"hflip": False, "brightness_jitter": 0.0},
        "early_stop_patience": 50,
    }
    Path(path).write_text(json.dumps(doc))
    return str(path)


def test_synth_creates_dataset(runner, tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"count": 3, "background": "FLAT", "seed": 1}))
    out = tmp_path / "ds"
    result = runner.invoke(main, ["synth", "--spec", str(spec), "--out", str(out),
                                  "--val-fraction", "0.34"])
    assert result.exit_code == 0, result.output
    doc = json.loads(result.output)
    assert doc["count"] == 3
    assert (out / "manifest.json").exists()
    assert len(list((out / "images").glob("*.png"))) == 3


def test_synth_invalid_spec(runner, tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"count": 0}))
    result = runner.invoke(main, ["synth", "--spec", str(spec), "--out", str(tmp_path / "x")])
    assert result.exit_code == 2
    assert "error:" in result.stderr


def test_synth_malformed_json(runner, tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text("{not json")
    result = runner.invoke(main, ["synth", "--spec", str(spec), "--out", str(tmp_path / "x")])
    assert result.exit_code == 2
    assert "error:" in result.stderr


def test_missing_file_is_usage_error(runner, tmp_path):
    result = runner.invoke(main, ["synth", "--spec", str(tmp_path / "none.json"),
                                  "--out", str(tmp_path / "x")])
    assert result.exit_code == 2


def test_train_predict_eval_pipeline(runner, tmp_path, small_dataset):
    cfg = micro_train_json(tmp_path / "train.json")
    out = tmp_path / "run"
    result = runner.invoke(main, ["train", "--manifest", str(small_dataset.root / "manifest.json"),
                                  "--model", "micro", "--config", cfg, "--out", str(out),
                                  "--seed", "0"])
    assert result.exit_code == 0, result.output
    ckpt = json.loads(result.output)["best_checkpoint"]
    assert Path(ckpt).exists()

    pred_out = tmp_path / "preds"
    result = runner.invoke(main, ["predict", "--ckpt", ckpt,
                                  "--images", str(small_dataset.root / "images"),
                                  "--out", str(pred_out), "--postprocess"])
    assert result.exit_code == 0, result.output
    masks = sorted(pred_out.glob("*.png"))
    assert len([m for m in masks if not m.name.endswith(".overlay.png")]) == 14
    assert len(list(pred_out.glob("*.lines.json"))) == 14
    lines = json.loads(next(pred_out.glob("*.lines.json")).read_text())
    assert set(lines) == {"segments", "dominant"}

    report_path = tmp_path / "report.json"
    result = runner.invoke(main, ["eval", "--pred", str(pred_out),
                                  "--truth", str(small_dataset.root / "manifest.json"),
                                  "--report", str(report_path), "--phase", "1"])
    assert result.exit_code == 0, result.output
    row = json.loads(result.output)
    assert {"iou", "f1", "phase"} <= set(row)
    assert report_path.exists()


def test_eval_missing_predictions(runner, tmp_path, small_dataset):
    empty = tmp_path / "empty"
    empty.mkdir()
    result = runner.invoke(main, ["eval", "--pred", str(empty),
                                  "--truth", str(small_dataset.root / "manifest.json"),
                                  "--report", str(tmp_path / "r.json")])
    assert result.exit_code == 2
    assert "missing prediction" in result.stderr


def test_weaksup_cli_cycle(runner, tmp_path, small_dataset):
    cfg = micro_train_json(tmp_path / "train.json")
    state_dir = tmp_path / "phases"
    manifest = str(small_dataset.root / "manifest.json")
    common = ["--model", "micro", "--train-config", cfg]

    result = runner.invoke(main, ["weaksup", "init", "--state", str(state_dir),
                                  "--manifest", manifest, "--seed-count", "4", *common])
    assert result.exit_code == 0, result.output
    assert json.loads(result.output) == {"phase": 1, "pending": 6}

    result = runner.invoke(main, ["weaksup", "review-export", "--state", str(state_dir), *common])
    assert result.exit_code == 0, result.output
    batch = json.loads(result.output)
    assert batch["count"] == 6
    listing = json.loads((state_dir / "phase1" / "review_batch.json").read_text())
    assert {"sample_id", "prediction", "dominant_line"} <= set(listing[0])

    result = runner.invoke(main, ["weaksup", "ingest", "--state", str(state_dir),
                                  "--oracle-reviewer", "tau=0.7,annotate_fraction=1.0,seed=0",
                                  *common])
    assert result.exit_code == 0, result.output
    pools = json.loads(result.output)
    assert pools["weak"] + pools["negative"] + pools["pending"] == 6
    assert pools["pending"] < 6  # the oracle always decides something

    result = runner.invoke(main, ["weaksup", "advance", "--state", str(state_dir), *common])
    assert result.exit_code == 0, result.output
    assert json.loads(result.output)["phase"] == 2

    # no new verdicts since the retrain
    result = runner.invoke(main, ["weaksup", "advance", "--state", str(state_dir), *common])
    assert result.exit_code == 2
    assert "unchanged" in result.stderr


def test_weaksup_ingest_requires_one_source(runner, tmp_path, small_dataset):
    cfg = micro_train_json(tmp_path / "train.json")
    state_dir = tmp_path / "phases"
    runner.invoke(main, ["weaksup", "init", "--state", str(state_dir),
                         "--manifest", str(small_dataset.root / "manifest.json"),
                         "--seed-count", "4", "--model", "micro", "--train-config", cfg])
    result = runner.invoke(main, ["weaksup", "ingest", "--state", str(state_dir),
                                  "--model", "micro", "--train-config", cfg])
    assert result.exit_code == 2
    assert "exactly one" in result.stderr


def test_weaksup_ingest_from_file(runner, tmp_path, small_dataset):
    cfg = micro_train_json(tmp_path / "train.json")
    state_dir = tmp_path / "phases"
    manifest = str(small_dataset.root / "manifest.json")
    common = ["--model", "micro", "--train-config", cfg]
    runner.invoke(main, ["weaksup", "init", "--state", str(state_dir),
                         "--manifest", manifest, "--seed-count", "4", *common])
    runner.invoke(main, ["weaksup", "review-export", "--state", str(state_dir), *common])
    listing = json.loads((state_dir / "phase1" / "review_batch.json").read_text())
    verdicts = tmp_path / "verdicts.json"
    verdicts.write_text(json.dumps([
        {"sample_id": listing[0]["sample_id"], "decision": "ACCEPT"},
        {"sample_id": listing[1]["sample_id"], "decision": "REJECT_WITH_ANNOTATION",
         "polyline": [[100, 100], [800, 400]], "brush_width": 5},
    ]))
    result = runner.invoke(main, ["weaksup", "ingest", "--state", str(state_dir),
                                  "--verdicts", str(verdicts), *common])
    assert result.exit_code == 0, result.output
    assert json.loads(result.output) == {"weak": 1, "negative": 1, "pending": 4}
