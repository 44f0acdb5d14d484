"""Evaluation metrics for binary segmentation: IoU, precision/recall, F1."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ShapeMismatch


def _binary_pair(pred, target) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred)
    t = np.asarray(target)
    if p.shape != t.shape:
        raise ShapeMismatch(f"pred {p.shape} vs target {t.shape}")
    return p.astype(bool), t.astype(bool)


def iou(pred_bin, target) -> float:
    """Intersection over union of the foreground class; both-empty counts as 1.0."""
    p, t = _binary_pair(pred_bin, target)
    union = np.logical_or(p, t).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(p, t).sum() / union)


def precision_recall(pred_bin, target) -> tuple[float, float]:
    p, t = _binary_pair(pred_bin, target)
    tp = np.logical_and(p, t).sum()
    fp = np.logical_and(p, ~t).sum()
    fn = np.logical_and(~p, t).sum()
    prec = float(tp / (tp + fp)) if tp + fp > 0 else 0.0
    rec = float(tp / (tp + fn)) if tp + fn > 0 else 0.0
    return prec, rec


def f1(pred_bin, target) -> float:
    """Harmonic mean of precision and recall; 0.0 when P + R = 0.

    Computed directly from pixel counts as 2 TP / (2 TP + FP + FN), which is
    algebraically identical and avoids the rounding of the two-ratio form.
    """
    p, t = _binary_pair(pred_bin, target)
    tp = np.logical_and(p, t).sum()
    fp = np.logical_and(p, ~t).sum()
    fn = np.logical_and(~p, t).sum()
    denom = 2 * tp + fp + fn
    if denom == 0:
        return 0.0
    return float(2 * tp / denom)


@dataclass
class EvalReport:
    """Dataset-level metrics: per-image means of per-sample scores, in [0, 1]."""

    iou: float
    f1: float
    precision: float
    recall: float
    per_sample: list[tuple[str, float, float]] = field(default_factory=list)

    def to_row(self, train_sets: str = "", test_set: str = "", phase: int = 0) -> dict:
        # mirrors the published table row shape; scores scaled x100
        return {
            "train_sets": train_sets,
            "test_set": test_set,
            "phase": phase,
            "iou": round(self.iou * 100.0, 2),
            "f1": round(self.f1 * 100.0, 2),
        }

    def save(self, path: Path | str, **row_kwargs) -> None:
        doc = self.to_row(**row_kwargs)
        doc["precision"] = round(self.precision * 100.0, 2)
        doc["recall"] = round(self.recall * 100.0, 2)
        doc["per_sample"] = [
            {"id": sid, "iou": round(i * 100.0, 2), "f1": round(f * 100.0, 2)}
            for sid, i, f in self.per_sample
        ]
        Path(path).write_text(json.dumps(doc, indent=2))


def evaluate_pairs(pairs: list[tuple[str, np.ndarray, np.ndarray]]) -> EvalReport:
    """Score (id, predicted mask, truth mask) triples and average per image."""
    per_sample = []
    precs, recs = [], []
    for sid, pred, truth in pairs:
        per_sample.append((sid, iou(pred, truth), f1(pred, truth)))
        pr, rc = precision_recall(pred, truth)
        precs.append(pr)
        recs.append(rc)
    n = max(len(per_sample), 1)
    return EvalReport(
        iou=sum(i for _, i, _ in per_sample) / n,
        f1=sum(f for _, _, f in per_sample) / n,
        precision=sum(precs) / n if precs else 0.0,
        recall=sum(recs) / n if recs else 0.0,
        per_sample=per_sample,
    )
