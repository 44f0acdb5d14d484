"""Command-line entry point for the full pipeline.

Exit codes: 0 success, 2 validation error, 3 runtime error. Errors print a
single machine-parsable line `error: <message>` on stderr.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import data as dat
from .errors import CavelineError
from .losses import LossWeights
from .metrics import evaluate_pairs
from .model import ModelConfig, build_model, load_checkpoint, predict as model_predict
from .postproc import HoughConfig, dominant_line, hough_segments, merge_segments, render_overlay
from .trainer import SampleSet, TrainConfig, train as run_train, validate as run_validate
from . import weaksup as ws


def _fail(msg: str, code: int) -> None:
    print(f"error: {msg}", file=sys.stderr)
    sys.exit(code)


def guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (CavelineError, ValueError, KeyError, json.JSONDecodeError) as exc:
            _fail(str(exc), 2)
        except click.ClickException:
            raise
        except Exception as exc:  # pragma: no cover - unexpected runtime faults
            _fail(repr(exc), 3)

    return wrapper


def _model_config(name: str, config_path: str | None) -> ModelConfig:
    if config_path:
        return ModelConfig.from_dict(json.loads(Path(config_path).read_text()))
    if name == "light":
        return ModelConfig.light()
    if name == "base":
        return ModelConfig.base()
    if name == "micro":
        return ModelConfig.micro()
    raise ValueError(f"unknown model variant {name!r}")


def _train_config(path: str | None, seed: int | None) -> TrainConfig:
    cfg = TrainConfig.from_dict(json.loads(Path(path).read_text())) if path else TrainConfig()
    if seed is not None:
        cfg.seed = seed
    return cfg


def _synth_spec(path: str, seed: int | None) -> dat.SyntheticSpec:
    doc = json.loads(Path(path).read_text())
    if "background" in doc:
        doc["background"] = dat.Background(doc["background"])
    if "illumination" in doc:
        doc["illumination"] = dat.Illumination(doc["illumination"])
    for key in ("line_color_low", "line_color_high", "line_thickness_range"):
        if key in doc:
            doc[key] = tuple(doc[key])
    spec = dat.SyntheticSpec(**doc)
    if seed is not None:
        spec.seed = seed
    return spec.validate()


@click.group()
def main():
    """Weakly-supervised caveline segmentation toolkit."""


@main.command()
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--name", default="synthetic")
@click.option("--location-tag", default="synthetic")
@click.option("--val-fraction", default=0.0, type=float)
@click.option("--test-fraction", default=0.0, type=float)
@click.option("--seed", default=None, type=int)
@guarded
def synth(spec_path, out_dir, name, location_tag, val_fraction, test_fraction, seed):
    """Generate a synthetic dataset from a spec JSON."""
    spec = _synth_spec(spec_path, seed)
    manifest = dat.generate_synthetic(spec, out_dir, name=name, location_tag=location_tag)
    if val_fraction or test_fraction:
        manifest = dat.assign_splits(manifest, val_fraction, test_fraction, seed=spec.seed)
        manifest.save(Path(out_dir) / "manifest.json")
    click.echo(json.dumps({"manifest": str(Path(out_dir) / "manifest.json"), "count": len(manifest.samples)}))


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--model", "model_name", default="light", type=click.Choice(["light", "base", "micro"]))
@click.option("--model-config", default=None, type=click.Path(exists=True))
@click.option("--config", "config_path", default=None, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--seed", default=None, type=int)
@guarded
def train(manifest_path, model_name, model_config, config_path, out_dir, seed):
    """Run one supervised training phase."""
    manifest = dat.load_manifest(manifest_path)
    cfg = _train_config(config_path, seed)
    model = build_model(_model_config(model_name, model_config))
    train_ids = manifest.split_ids(dat.Split.TRAIN)
    val_ids = manifest.split_ids(dat.Split.VAL) or train_ids
    record = run_train(model, SampleSet(manifest, train_ids), SampleSet(manifest, val_ids), cfg, out_dir)
    click.echo(json.dumps({"best_checkpoint": record.best_checkpoint, "epochs": len(record.epochs)}))


@main.command()
@click.option("--ckpt", required=True, type=click.Path(exists=True))
@click.option("--images", "images_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--postprocess", is_flag=True)
@click.option("--threshold", default=0.5, type=float)
@click.option("--hough-config", default=None, type=click.Path(exists=True))
@click.option("--seed", default=0, type=int)
@guarded
def predict(ckpt, images_dir, out_dir, postprocess, threshold, hough_config, seed):
    """Predict masks (and optionally line JSON + overlays) for a directory of images."""
    import cv2

    model = load_checkpoint(ckpt)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    hough = HoughConfig.from_dict(json.loads(Path(hough_config).read_text())) if hough_config else HoughConfig(seed=seed)
    w, h = model.config.input_size
    for img_path in sorted(Path(images_dir).glob("*.png")):
        src = dat.load_image(img_path)
        img = src
        if img.shape[:2] != (h, w):
            img = cv2.resize(img, (w, h), interpolation=cv2.INTER_AREA)
        probs = model_predict(model, img[None], [img_path.stem]).probs[0]
        mask = dat.binarize(probs, threshold)
        if mask.shape != src.shape[:2]:
            mask = cv2.resize(mask, (src.shape[1], src.shape[0]), interpolation=cv2.INTER_NEAREST)
        dat.save_mask(out / f"{img_path.stem}.png", mask)
        if postprocess:
            segs = merge_segments(hough_segments(mask, hough), hough)
            dom = max(segs, key=lambda s: (s.votes, s.length, -s.carrier_rho)) if segs else None
            doc = {
                "segments": [s.to_dict() for s in segs],
                "dominant": None if dom is None else {"p0": list(dom.p0), "p1": list(dom.p1)},
            }
            (out / f"{img_path.stem}.lines.json").write_text(json.dumps(doc))
            dat.save_image(out / f"{img_path.stem}.overlay.png", render_overlay(src, mask, dom))
    click.echo(json.dumps({"out": str(out)}))


@main.command("eval")
@click.option("--pred", "pred_dir", required=True, type=click.Path(exists=True))
@click.option("--truth", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--report", "report_path", required=True, type=click.Path())
@click.option("--split", default=None, type=click.Choice(["TRAIN", "VAL", "TEST"]))
@click.option("--phase", default=0, type=int)
@guarded
def eval_cmd(pred_dir, manifest_path, report_path, split, phase):
    """Score predicted masks against manifest ground truth."""
    manifest = dat.load_manifest(manifest_path)
    ids = manifest.split_ids(dat.Split(split)) if split else manifest.ids
    pairs = []
    for sid in ids:
        entry = manifest.entry(sid)
        if entry.mask is None:
            continue
        pred_path = Path(pred_dir) / f"{sid}.png"
        if not pred_path.exists():
            raise CavelineError(f"missing prediction for {sid}")
        pairs.append((sid, dat.load_mask(pred_path), dat.load_mask(manifest.root / entry.mask)))
    if not pairs:
        raise CavelineError("no labeled samples to evaluate")
    report = evaluate_pairs(pairs)
    report.save(report_path, test_set=manifest.name, phase=phase)
    click.echo(json.dumps(report.to_row(test_set=manifest.name, phase=phase)))


def _weaksup_config(model_name, model_config, train_config, seed) -> ws.WeaksupConfig:
    return ws.WeaksupConfig(
        model=_model_config(model_name, model_config),
        train=_train_config(train_config, seed),
    )


def _parse_oracle(spec: str) -> ws.OracleReviewer:
    kwargs = {}
    for part in spec.split(","):
        if not part:
            continue
        key, _, value = part.partition("=")
        kwargs[key.strip()] = float(value)
    if "seed" in kwargs:
        kwargs["seed"] = int(kwargs["seed"])
    return ws.OracleReviewer(**kwargs)


@main.group()
def weaksup():
    """Multi-phase weak-supervision orchestrator steps."""


@weaksup.command("init")
@click.option("--state", "state_dir", required=True, type=click.Path())
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--seed-count", default=20, type=int)
@click.option("--model", "model_name", default="light", type=click.Choice(["light", "base", "micro"]))
@click.option("--model-config", default=None, type=click.Path(exists=True))
@click.option("--train-config", default=None, type=click.Path(exists=True))
@click.option("--seed", default=0, type=int)
@guarded
def weaksup_init(state_dir, manifest_path, seed_count, model_name, model_config, train_config, seed):
    """Start phase 1 from a seeded subset of the train split."""
    manifest = dat.load_manifest(manifest_path)
    train_ids = sorted(manifest.split_ids(dat.Split.TRAIN))
    rng = np.random.default_rng(seed)
    seed_labels = set(np.asarray(train_ids)[rng.permutation(len(train_ids))[:seed_count]].tolist())
    config = _weaksup_config(model_name, model_config, train_config, seed)
    state = ws.start_phase(manifest_path, seed_labels, config, state_dir)
    click.echo(json.dumps({"phase": state.phase_index, "pending": len(state.pending_pool)}))


@weaksup.command("review-export")
@click.option("--state", "state_dir", required=True, type=click.Path(exists=True))
@click.option("--model", "model_name", default="light", type=click.Choice(["light", "base", "micro"]))
@click.option("--model-config", default=None, type=click.Path(exists=True))
@click.option("--train-config", default=None, type=click.Path(exists=True))
@click.option("--seed", default=0, type=int)
@guarded
def weaksup_review_export(state_dir, model_name, model_config, train_config, seed):
    """Predict pending samples and export the review batch listing."""
    state = ws.PhaseState.load(state_dir)
    config = _weaksup_config(model_name, model_config, train_config, seed)
    items = ws.emit_review_batch(state, config)
    doc = [
        {
            "sample_id": it.sample_id,
            "prediction": f"phase{state.phase_index}/predictions/{it.sample_id}.png",
            "dominant_line": None if it.dominant is None else it.dominant.to_dict(),
        }
        for it in items
    ]
    out = Path(state_dir) / f"phase{state.phase_index}" / "review_batch.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(doc, indent=2))
    click.echo(json.dumps({"count": len(doc), "batch": str(out)}))


@weaksup.command("ingest")
@click.option("--state", "state_dir", required=True, type=click.Path(exists=True))
@click.option("--verdicts", "verdicts_path", default=None, type=click.Path(exists=True))
@click.option("--oracle-reviewer", "oracle_spec", default=None,
              help="simulate the expert, e.g. tau=0.7,annotate_fraction=1.0,seed=0")
@click.option("--model", "model_name", default="light", type=click.Choice(["light", "base", "micro"]))
@click.option("--model-config", default=None, type=click.Path(exists=True))
@click.option("--train-config", default=None, type=click.Path(exists=True))
@click.option("--seed", default=0, type=int)
@guarded
def weaksup_ingest(state_dir, verdicts_path, oracle_spec, model_name, model_config, train_config, seed):
    """Apply verdicts from a JSON file or from the simulated oracle reviewer."""
    state = ws.PhaseState.load(state_dir)
    config = _weaksup_config(model_name, model_config, train_config, seed)
    if (verdicts_path is None) == (oracle_spec is None):
        raise ValueError("provide exactly one of --verdicts or --oracle-reviewer")
    if oracle_spec is not None:
        items = ws.emit_review_batch(state, config)
        verdicts = _parse_oracle(oracle_spec).review(items, state.manifest())
    else:
        raw = json.loads(Path(verdicts_path).read_text())
        verdicts = []
        for v in raw:
            corrected = None
            if v.get("polyline"):
                corrected = dat.render_polyline_mask(np.asarray(v["polyline"]), v.get("brush_width", 4))
            verdicts.append(ws.Verdict(v["sample_id"], ws.Decision(v["decision"]), corrected,
                                       reviewer=v.get("reviewer", "cli")))
    ws.ingest_verdicts(state, verdicts)
    click.echo(json.dumps({
        "weak": len(state.weak_pool), "negative": len(state.negative_pool),
        "pending": len(state.pending_pool),
    }))


@weaksup.command("advance")
@click.option("--state", "state_dir", required=True, type=click.Path(exists=True))
@click.option("--model", "model_name", default="light", type=click.Choice(["light", "base", "micro"]))
@click.option("--model-config", default=None, type=click.Path(exists=True))
@click.option("--train-config", default=None, type=click.Path(exists=True))
@click.option("--seed", default=0, type=int)
@guarded
def weaksup_advance(state_dir, model_name, model_config, train_config, seed):
    """Retrain on the fused pools and move to the next phase."""
    state = ws.PhaseState.load(state_dir)
    config = _weaksup_config(model_name, model_config, train_config, seed)
    ws.advance_phase(state, config)
    metrics = None if state.metrics is None else {"iou": state.metrics.iou, "f1": state.metrics.f1}
    click.echo(json.dumps({"phase": state.phase_index, "test_metrics": metrics}))


@main.command()
@click.option("--state", "state_dir", required=True, type=click.Path(exists=True))
@click.option("--port", default=8000, type=int)
@click.option("--host", default="127.0.0.1")
@click.option("--model", "model_name", default="light", type=click.Choice(["light", "base", "micro"]))
@click.option("--model-config", default=None, type=click.Path(exists=True))
@click.option("--train-config", default=None, type=click.Path(exists=True))
@guarded
def serve(state_dir, port, host, model_name, model_config, train_config):
    """Launch the review service."""
    import uvicorn

    from .service import create_app

    app = create_app(state_dir, _weaksup_config(model_name, model_config, train_config, None))
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
