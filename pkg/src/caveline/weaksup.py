"""Multi-phase weak-supervision protocol: train on the labeled seed, predict
on the unlabeled pool, triage predictions (human or simulated oracle), fuse
accepted weak labels and corrected negatives, retrain, repeat.

Everything durable lives under a phases directory:

    phases/
      state.json            current PhaseState
      verdicts.jsonl        append-only audit log
      phase{K}/             checkpoint, predictions/, weak + corrected masks
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional

import numpy as np

from .data import (DatasetManifest, LabelKind, ManifestEntry, Split, binarize,
                   load_manifest, load_mask, save_mask)
from .errors import (DuplicateVerdict, EmptySeed, NoCheckpoint, NothingNew,
                     UnknownSample)
from .metrics import EvalReport, iou
from .model import ModelConfig, build_model, load_checkpoint, predict
from .postproc import HoughConfig, LineSegment, dominant_line
from .trainer import SampleSet, TrainConfig, train, validate


class Decision(str, Enum):
    ACCEPT = "ACCEPT"
    REJECT = "REJECT"
    REJECT_WITH_ANNOTATION = "REJECT_WITH_ANNOTATION"


@dataclass
class Verdict:
    sample_id: str
    decision: Decision
    corrected_mask: Optional[np.ndarray] = None
    reviewer: str = "anonymous"

    def validate(self) -> "Verdict":
        if self.decision == Decision.REJECT_WITH_ANNOTATION and self.corrected_mask is None:
            raise ValueError("REJECT_WITH_ANNOTATION requires a corrected mask")
        return self


@dataclass
class WeaksupConfig:
    model: ModelConfig = field(default_factory=ModelConfig.light)
    train: TrainConfig = field(default_factory=TrainConfig)
    hough: HoughConfig = field(default_factory=HoughConfig)
    threshold: float = 0.5
    warm_start: bool = True  # retrain from the previous phase checkpoint


@dataclass
class ReviewItem:
    sample_id: str
    image: np.ndarray
    predicted_mask: np.ndarray  # binarized {0,1}
    dominant: Optional[LineSegment]


@dataclass
class PhaseState:
    root: Path
    manifest_path: str
    phase_index: int
    labeled_pool: set[str]
    weak_pool: set[str]
    negative_pool: set[str]
    pending_pool: set[str]
    checkpoint: Optional[str]
    metrics: Optional[EvalReport]
    weak_masks: dict[str, dict]  # id -> {"mask": path, "checkpoint": path}
    corrected_masks: dict[str, str]
    last_trained: Optional[str]  # pool signature at last training

    @property
    def verdict_log(self) -> list[dict]:
        path = self.root / "verdicts.jsonl"
        if not path.exists():
            return []
        return [json.loads(line) for line in path.read_text().splitlines() if line]

    def pools_signature(self) -> str:
        return json.dumps(
            [sorted(self.labeled_pool), sorted(self.weak_pool), sorted(self.negative_pool)]
        )

    def check_invariants(self) -> None:
        pools = [self.labeled_pool, self.weak_pool, self.negative_pool, self.pending_pool]
        total = sum(len(p) for p in pools)
        assert len(set().union(*pools)) == total, "pools overlap"
        for sid in self.weak_pool:
            assert sid in self.weak_masks, f"weak sample {sid} has no stored mask"

    def manifest(self) -> DatasetManifest:
        return load_manifest(self.root / self.manifest_path)

    def save(self) -> None:
        doc = {
            "manifest": self.manifest_path,
            "phase_index": self.phase_index,
            "pools": {
                "labeled": sorted(self.labeled_pool),
                "weak": sorted(self.weak_pool),
                "negative": sorted(self.negative_pool),
                "pending": sorted(self.pending_pool),
            },
            "checkpoint": self.checkpoint,
            "metrics": None
            if self.metrics is None
            else {
                "iou": self.metrics.iou,
                "f1": self.metrics.f1,
                "precision": self.metrics.precision,
                "recall": self.metrics.recall,
                "per_sample": self.metrics.per_sample,
            },
            "weak_masks": self.weak_masks,
            "corrected_masks": self.corrected_masks,
            "last_trained": self.last_trained,
        }
        tmp = self.root / "state.json.tmp"
        tmp.write_text(json.dumps(doc, indent=2))
        os.replace(tmp, self.root / "state.json")

    @classmethod
    def load(cls, root: Path | str) -> "PhaseState":
        root = Path(root)
        doc = json.loads((root / "state.json").read_text())
        metrics = None
        if doc["metrics"] is not None:
            m = doc["metrics"]
            metrics = EvalReport(m["iou"], m["f1"], m["precision"], m["recall"],
                                 [tuple(e) for e in m["per_sample"]])
        return cls(
            root=root,
            manifest_path=doc["manifest"],
            phase_index=doc["phase_index"],
            labeled_pool=set(doc["pools"]["labeled"]),
            weak_pool=set(doc["pools"]["weak"]),
            negative_pool=set(doc["pools"]["negative"]),
            pending_pool=set(doc["pools"]["pending"]),
            checkpoint=doc["checkpoint"],
            metrics=metrics,
            weak_masks=doc["weak_masks"],
            corrected_masks=doc["corrected_masks"],
            last_trained=doc["last_trained"],
        )


def _append_log(root: Path, entries: list[dict]) -> None:
    # write-ahead: flushed and fsynced before the state file is touched
    with open(root / "verdicts.jsonl", "a") as fh:
        for e in entries:
            fh.write(json.dumps(e) + "\n")
        fh.flush()
        os.fsync(fh.fileno())


def _val_ids(manifest: DatasetManifest, labeled: set[str]) -> list[str]:
    vals = manifest.split_ids(Split.VAL)
    if vals:
        return vals
    # fall back to a slice of the labeled pool
    ordered = sorted(labeled)
    n = max(1, len(ordered) // 10)
    return ordered[:n]


def _phase_manifest(state: PhaseState, manifest: DatasetManifest) -> tuple[DatasetManifest, list[str]]:
    """Build the training manifest for the current pools: human masks for the
    labeled pool, stored model predictions for weak positives, and human
    corrections for relabeled negatives."""
    entries = []
    for sid in sorted(state.labeled_pool):
        e = manifest.entry(sid)
        rel_img = os.path.relpath(manifest.root / e.image, state.root)
        rel_msk = os.path.relpath(manifest.root / e.mask, state.root)
        entries.append(ManifestEntry(sid, rel_img, rel_msk, LabelKind.HUMAN, e.location_tag, Split.TRAIN))
    for sid in sorted(state.weak_pool):
        e = manifest.entry(sid)
        rel_img = os.path.relpath(manifest.root / e.image, state.root)
        entries.append(ManifestEntry(sid, rel_img, state.weak_masks[sid]["mask"],
                                     LabelKind.WEAK_POSITIVE, e.location_tag, Split.TRAIN))
    for sid in sorted(state.negative_pool):
        e = manifest.entry(sid)
        rel_img = os.path.relpath(manifest.root / e.image, state.root)
        entries.append(ManifestEntry(sid, rel_img, state.corrected_masks[sid],
                                     LabelKind.NEGATIVE_RELABELED, e.location_tag, Split.TRAIN))
    val_ids = _val_ids(manifest, state.labeled_pool)
    for sid in val_ids:
        if any(x.id == sid for x in entries):
            continue
        e = manifest.entry(sid)
        rel_img = os.path.relpath(manifest.root / e.image, state.root)
        rel_msk = os.path.relpath(manifest.root / e.mask, state.root)
        entries.append(ManifestEntry(sid, rel_img, rel_msk, LabelKind.HUMAN, e.location_tag, Split.VAL))
    train_ids = sorted(state.labeled_pool | state.weak_pool | state.negative_pool)
    return DatasetManifest("phase-train", entries, root=state.root).validate(), train_ids


def _train_and_eval(state: PhaseState, config: WeaksupConfig) -> None:
    manifest = state.manifest()
    phase_dir = state.root / f"phase{state.phase_index}"
    phase_dir.mkdir(parents=True, exist_ok=True)

    if config.warm_start and state.checkpoint is not None:
        model = load_checkpoint(state.root / state.checkpoint)
    else:
        model = build_model(config.model)

    train_manifest, train_ids = _phase_manifest(state, manifest)
    val_ids = _val_ids(manifest, state.labeled_pool)
    val_manifest = manifest if set(val_ids) <= set(manifest.ids) else train_manifest
    record = train(
        model,
        SampleSet(train_manifest, train_ids),
        SampleSet(val_manifest, val_ids),
        config.train,
        phase_dir,
        phase_index=state.phase_index,
    )
    state.checkpoint = os.path.relpath(record.best_checkpoint, state.root)

    test_ids = manifest.split_ids(Split.TEST)
    if test_ids:
        best = load_checkpoint(state.root / state.checkpoint)
        state.metrics = validate(best, SampleSet(manifest, test_ids), config.threshold)
        state.metrics.save(phase_dir / "test_report.json", phase=state.phase_index)
    state.last_trained = state.pools_signature()


def start_phase(
    manifest_path: Path | str,
    seed_labels: set[str],
    config: WeaksupConfig,
    root: Path | str,
) -> PhaseState:
    """Create phase 1: seed human labels, everything else in the train split
    pending; trains the initial model and evaluates on the held-out test split."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    manifest = load_manifest(manifest_path)
    if not seed_labels:
        raise EmptySeed("seed label set is empty")
    train_ids = set(manifest.split_ids(Split.TRAIN))
    for sid in seed_labels:
        if sid not in train_ids:
            raise UnknownSample(f"seed id {sid} is not in the train split")
        if manifest.entry(sid).mask is None:
            raise EmptySeed(f"seed sample {sid} carries no human mask")

    state = PhaseState(
        root=root,
        manifest_path=os.path.relpath(Path(manifest_path), root),
        phase_index=1,
        labeled_pool=set(seed_labels),
        weak_pool=set(),
        negative_pool=set(),
        pending_pool=train_ids - set(seed_labels),
        checkpoint=None,
        metrics=None,
        weak_masks={},
        corrected_masks={},
        last_trained=None,
    )
    _train_and_eval(state, config)
    state.check_invariants()
    state.save()
    return state


def emit_review_batch(state: PhaseState, config: WeaksupConfig) -> list[ReviewItem]:
    """Predict every pending sample with the phase checkpoint; binarized masks
    are stored on disk so accepted weak labels are bit-reproducible."""
    if state.checkpoint is None:
        raise NoCheckpoint("phase has no trained checkpoint")
    if not state.pending_pool:
        return []
    manifest = state.manifest()
    model = load_checkpoint(state.root / state.checkpoint)
    pred_dir = state.root / f"phase{state.phase_index}" / "predictions"
    pred_dir.mkdir(parents=True, exist_ok=True)

    items = []
    w, h = model.config.input_size
    import cv2

    for sid in sorted(state.pending_pool):
        sample = manifest.load_sample(sid)
        img = sample.image
        if img.shape[:2] != (h, w):
            img_in = cv2.resize(img, (w, h), interpolation=cv2.INTER_AREA)
        else:
            img_in = img
        probs = predict(model, img_in[None], [sid]).probs[0]
        mask = binarize(probs, config.threshold)
        if mask.shape != img.shape[:2]:
            mask = cv2.resize(mask, (img.shape[1], img.shape[0]), interpolation=cv2.INTER_NEAREST)
        save_mask(pred_dir / f"{sid}.png", mask)
        items.append(ReviewItem(sid, img, mask, dominant_line(mask, config.hough)))
    return items


def ingest_verdicts(state: PhaseState, verdicts: list[Verdict]) -> PhaseState:
    """Apply reviewer decisions: ACCEPT moves to the weak pool with the stored
    prediction as its mask; REJECT_WITH_ANNOTATION moves to the negative pool
    with the human-corrected mask; plain REJECT stays pending."""
    seen = set()
    for v in verdicts:
        v.validate()
        if v.sample_id in seen:
            raise DuplicateVerdict(f"duplicate verdict for {v.sample_id}")
        seen.add(v.sample_id)
        if v.sample_id not in state.pending_pool:
            raise UnknownSample(f"{v.sample_id} is not pending")

    log_entries = []
    corrected_dir = state.root / f"phase{state.phase_index}" / "corrected_masks"
    pred_dir = state.root / f"phase{state.phase_index}" / "predictions"
    for v in verdicts:
        if v.decision == Decision.ACCEPT:
            mask_path = pred_dir / f"{v.sample_id}.png"
            if not mask_path.exists():
                raise NoCheckpoint(f"no stored prediction for {v.sample_id}; run emit_review_batch first")
            state.pending_pool.remove(v.sample_id)
            state.weak_pool.add(v.sample_id)
            state.weak_masks[v.sample_id] = {
                "mask": os.path.relpath(mask_path, state.root),
                "checkpoint": state.checkpoint,
            }
        elif v.decision == Decision.REJECT_WITH_ANNOTATION:
            corrected_dir.mkdir(parents=True, exist_ok=True)
            path = corrected_dir / f"{v.sample_id}.png"
            save_mask(path, v.corrected_mask)
            state.pending_pool.remove(v.sample_id)
            state.negative_pool.add(v.sample_id)
            state.corrected_masks[v.sample_id] = os.path.relpath(path, state.root)
        log_entries.append(
            {
                "sample_id": v.sample_id,
                "verdict": v.decision.value,
                "reviewer": v.reviewer,
                "timestamp": time.time(),
                "phase": state.phase_index,
            }
        )
    _append_log(state.root, log_entries)
    state.check_invariants()
    state.save()
    return state


def advance_phase(state: PhaseState, config: WeaksupConfig) -> PhaseState:
    """Retrain on labeled + weak + negative pools and bump the phase index."""
    if state.pools_signature() == state.last_trained:
        raise NothingNew("pools unchanged since the last training")
    state.phase_index += 1
    _train_and_eval(state, config)
    state.check_invariants()
    state.save()
    return state


@dataclass
class OracleReviewer:
    """Test stand-in for the human expert: accept when the prediction overlaps
    ground truth at IoU >= tau; otherwise annotate a fraction of the failures
    with the true mask and defer the rest."""

    tau: float = 0.7
    annotate_fraction: float = 1.0
    seed: int = 0
    name: str = "oracle"

    def review(self, items: list[ReviewItem], manifest: DatasetManifest) -> list[Verdict]:
        rng = np.random.default_rng(self.seed)
        verdicts = []
        for item in items:
            truth = manifest.load_sample(item.sample_id).mask
            if truth is None:
                continue
            if iou(item.predicted_mask, truth) >= self.tau:
                verdicts.append(Verdict(item.sample_id, Decision.ACCEPT, reviewer=self.name))
            elif rng.random() < self.annotate_fraction:
                verdicts.append(
                    Verdict(item.sample_id, Decision.REJECT_WITH_ANNOTATION,
                            corrected_mask=truth, reviewer=self.name)
                )
            else:
                verdicts.append(Verdict(item.sample_id, Decision.REJECT, reviewer=self.name))
        return verdicts
