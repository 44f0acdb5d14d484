"""Supervised training loop for one phase: batching, augmentation, RMSprop
optimization, checkpointing, and validation."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Optional

import cv2
import numpy as np
import torch

from .data import DatasetManifest, ImageSample
from .errors import EmptyDataset, NonFiniteLoss
from .losses import LossWeights, combined_loss
from .metrics import EvalReport, evaluate_pairs
from .model import CaveLineNet, predict, save_checkpoint
from .data import binarize


@dataclass
class OptimizerConfig:
    learning_rate: float = 1e-5
    momentum: float = 0.9
    weight_decay: float = 1e-8
    alpha: float = 0.99  # RMSprop smoothing


@dataclass
class Augmentation:
    hflip: bool = True
    brightness_jitter: float = 0.1
    rotation_deg: float = 0.0


@dataclass
class TrainConfig:
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    batch_size: int = 4
    max_epochs: int = 100
    loss_weights: LossWeights = field(default_factory=LossWeights)
    augmentation: Augmentation = field(default_factory=Augmentation)
    early_stop_patience: int = 15
    seed: int = 0
    grad_clip: Optional[float] = 5.0
    dice_smooth: float = 1.0
    threshold: float = 0.5

    def validate(self) -> "TrainConfig":
        assert self.optimizer.learning_rate > 0, "learning_rate must be positive"
        assert self.batch_size >= 1, "batch_size must be >= 1"
        self.loss_weights.validate()
        return self

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "optimizer" in d:
            d["optimizer"] = OptimizerConfig(**d["optimizer"])
        if "loss_weights" in d:
            d["loss_weights"] = LossWeights(**d["loss_weights"])
        if "augmentation" in d:
            d["augmentation"] = Augmentation(**d["augmentation"])
        return cls(**d).validate()


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_iou: float
    val_f1: float


@dataclass
class TrainRecord:
    epochs: list[EpochStats]
    best_checkpoint: str
    wall_time: float

    def save(self, path: Path | str) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2))


@dataclass
class SampleSet:
    """A view onto a manifest: the subset of ids used for one loop."""

    manifest: DatasetManifest
    ids: list[str]

    def __len__(self) -> int:
        return len(self.ids)

    def load(self, sample_id: str) -> ImageSample:
        return self.manifest.load_sample(sample_id)


def _resize_pair(image: np.ndarray, mask: np.ndarray, size: tuple[int, int]):
    w, h = size
    if image.shape[:2] != (h, w):
        image = cv2.resize(image, (w, h), interpolation=cv2.INTER_AREA)
        mask = cv2.resize(mask, (w, h), interpolation=cv2.INTER_NEAREST)
    return image, mask


def augment_pair(image: np.ndarray, mask: np.ndarray, aug: Augmentation, rng: np.random.Generator):
    """Apply the same geometric transform to image and mask; photometric jitter
    touches the image only."""
    if aug.hflip and rng.random() < 0.5:
        image = image[:, ::-1].copy()
        mask = mask[:, ::-1].copy()
    if aug.rotation_deg > 0:
        angle = float(rng.uniform(-aug.rotation_deg, aug.rotation_deg))
        h, w = mask.shape
        rot = cv2.getRotationMatrix2D((w / 2, h / 2), angle, 1.0)
        image = cv2.warpAffine(image, rot, (w, h), flags=cv2.INTER_LINEAR)
        mask = cv2.warpAffine(mask, rot, (w, h), flags=cv2.INTER_NEAREST)
    if aug.brightness_jitter > 0:
        gain = 1.0 + float(rng.uniform(-aug.brightness_jitter, aug.brightness_jitter))
        image = np.clip(image * gain, 0.0, 1.0)
    return image, mask


def _load_batch(sample_set: SampleSet, ids: list[str], size: tuple[int, int],
                aug: Optional[Augmentation], rng: Optional[np.random.Generator]):
    images, masks = [], []
    for sid in ids:
        s = sample_set.load(sid)
        if s.mask is None:
            raise EmptyDataset(f"sample {sid} has no mask")
        img, msk = _resize_pair(s.image, s.mask, size)
        if aug is not None:
            img, msk = augment_pair(img, msk, aug, rng)
        images.append(img)
        masks.append(msk)
    x = torch.from_numpy(np.stack(images)).permute(0, 3, 1, 2).float()
    y = torch.from_numpy(np.stack(masks)).float()
    return x, y


def validate(model: CaveLineNet, val_set: SampleSet, threshold: float = 0.5) -> EvalReport:
    """Score the model on a labeled set: per-sample and mean IoU/F1."""
    if len(val_set) == 0:
        raise EmptyDataset("validation set is empty")
    size = model.config.input_size
    pairs = []
    for sid in val_set.ids:
        s = val_set.load(sid)
        if s.mask is None:
            raise EmptyDataset(f"sample {sid} has no mask")
        img, msk = _resize_pair(s.image, s.mask, size)
        pred = predict(model, img[None], [sid]).probs[0]
        pairs.append((sid, binarize(pred, threshold), msk))
    return evaluate_pairs(pairs)


def train(
    model: CaveLineNet,
    train_set: SampleSet,
    val_set: SampleSet,
    config: TrainConfig,
    out_dir: Path | str,
    phase_index: int = 1,
) -> TrainRecord:
    """Train in place; returns the per-epoch record. The best checkpoint (by
    validation IoU) is written as phase{K}_epoch{E}.ckpt under out_dir."""
    config.validate()
    if len(train_set) == 0:
        raise EmptyDataset("training set is empty")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    opt = torch.optim.RMSprop(
        model.parameters(),
        lr=config.optimizer.learning_rate,
        alpha=config.optimizer.alpha,
        momentum=config.optimizer.momentum,
        weight_decay=config.optimizer.weight_decay,
    )
    size = model.config.input_size

    best_iou = -1.0
    best_path = out_dir / f"phase{phase_index}_epoch0.ckpt"
    save_checkpoint(model, best_path)  # initial weights; kept when max_epochs == 0
    epochs: list[EpochStats] = []
    stall = 0
    t0 = time.time()

    for epoch in range(1, config.max_epochs + 1):
        model.train()
        order = list(rng.permutation(train_set.ids))
        losses = []
        for i in range(0, len(order), config.batch_size):
            batch_ids = order[i : i + config.batch_size]
            x, y = _load_batch(train_set, batch_ids, size, config.augmentation, rng)
            opt.zero_grad()
            probs = model(x)
            loss = combined_loss(probs, y, config.loss_weights, smooth=config.dice_smooth)
            if not torch.isfinite(loss):
                raise NonFiniteLoss(f"non-finite loss at epoch {epoch}, batch ids {batch_ids}")
            loss.backward()
            if config.grad_clip is not None:
                torch.nn.utils.clip_grad_norm_(model.parameters(), config.grad_clip)
            opt.step()
            losses.append(float(loss.detach()))

        report = validate(model, val_set, config.threshold)
        epochs.append(EpochStats(epoch, float(np.mean(losses)), report.iou, report.f1))
        if report.iou > best_iou:
            best_iou = report.iou
            if best_path.exists():
                best_path.unlink()
            best_path = out_dir / f"phase{phase_index}_epoch{epoch}.ckpt"
            save_checkpoint(model, best_path)
            stall = 0
        else:
            stall += 1
            if stall >= config.early_stop_patience:
                break

    record = TrainRecord(epochs, str(best_path), time.time() - t0)
    record.save(out_dir / f"phase{phase_index}_train_record.json")
    return record
