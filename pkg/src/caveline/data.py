"""Dataset representation, manifest I/O, and the synthetic caveline generator.

Images are RGB rasters at the working resolution 960x540 with channel values
in [0, 1]; masks are binary {0, 1} maps of the same spatial size. On disk,
images are 8-bit RGB PNGs and masks are 8-bit grayscale PNGs with values
{0, 255}.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from enum import Enum
from pathlib import Path
from typing import Optional

import cv2
import numpy as np

from .errors import DuplicateId, InvalidConfig, InvalidSplit, IoFailure, MissingFile, ShapeMismatch

WORK_W = 960
WORK_H = 540


class LabelKind(str, Enum):
    HUMAN = "HUMAN"
    WEAK_POSITIVE = "WEAK_POSITIVE"
    NEGATIVE_RELABELED = "NEGATIVE_RELABELED"
    UNLABELED = "UNLABELED"


class Split(str, Enum):
    TRAIN = "TRAIN"
    VAL = "VAL"
    TEST = "TEST"


@dataclass
class ImageSample:
    """One frame plus optional ground-truth mask and label provenance."""

    id: str
    image: np.ndarray  # H x W x 3 float32 in [0, 1]
    mask: Optional[np.ndarray]  # H x W uint8 {0, 1} or None
    label_kind: LabelKind
    location_tag: str

    def __post_init__(self):
        if self.image.ndim != 3 or self.image.shape[2] != 3:
            raise ShapeMismatch(f"image must be HxWx3, got {self.image.shape}")
        if self.mask is not None:
            if self.mask.shape != self.image.shape[:2]:
                raise ShapeMismatch(
                    f"mask shape {self.mask.shape} does not match image {self.image.shape[:2]}"
                )
            vals = np.unique(self.mask)
            if not np.all(np.isin(vals, [0, 1])):
                raise ValueError(f"mask values must be in {{0,1}}, got {vals}")
        if self.label_kind == LabelKind.WEAK_POSITIVE and self.mask is None:
            raise ValueError("WEAK_POSITIVE samples must carry a model-generated mask")


@dataclass
class ManifestEntry:
    id: str
    image: str  # path relative to the manifest file
    mask: Optional[str]
    label_kind: LabelKind
    location_tag: str
    split: Split


@dataclass
class DatasetManifest:
    name: str
    samples: list[ManifestEntry]
    root: Path = field(default_factory=Path)

    def validate(self) -> "DatasetManifest":
        seen = set()
        for s in self.samples:
            if s.id in seen:
                raise DuplicateId(f"duplicate sample id {s.id!r}")
            seen.add(s.id)
            if not (self.root / s.image).exists():
                raise MissingFile(str(self.root / s.image))
            if s.mask is not None and not (self.root / s.mask).exists():
                raise MissingFile(str(self.root / s.mask))
            if not isinstance(s.split, Split):
                raise InvalidSplit(f"bad split for {s.id!r}: {s.split!r}")
        return self

    @property
    def ids(self) -> list[str]:
        return [s.id for s in self.samples]

    def entry(self, sample_id: str) -> ManifestEntry:
        for s in self.samples:
            if s.id == sample_id:
                return s
        raise KeyError(sample_id)

    def split_ids(self, split: Split) -> list[str]:
        return [s.id for s in self.samples if s.split == split]

    def load_sample(self, sample_id: str) -> ImageSample:
        e = self.entry(sample_id)
        img = load_image(self.root / e.image)
        msk = load_mask(self.root / e.mask) if e.mask is not None else None
        return ImageSample(e.id, img, msk, e.label_kind, e.location_tag)

    def save(self, path: Path | str) -> None:
        path = Path(path)
        doc = {
            "name": self.name,
            "samples": [
                {
                    "id": s.id,
                    "image": s.image,
                    **({"mask": s.mask} if s.mask is not None else {}),
                    "label_kind": s.label_kind.value,
                    "location_tag": s.location_tag,
                    "split": s.split.value,
                }
                for s in self.samples
            ],
        }
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(doc, indent=2))


def load_manifest(path: Path | str) -> DatasetManifest:
    path = Path(path)
    if not path.exists():
        raise MissingFile(str(path))
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise IoFailure(f"manifest {path} is not valid JSON: {exc}") from exc
    samples = [
        ManifestEntry(
            id=s["id"],
            image=s["image"],
            mask=s.get("mask"),
            label_kind=LabelKind(s["label_kind"]),
            location_tag=s["location_tag"],
            split=Split(s.get("split", "TRAIN")),
        )
        for s in doc["samples"]
    ]
    return DatasetManifest(doc["name"], samples, root=path.parent).validate()


def load_image(path: Path | str) -> np.ndarray:
    raw = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if raw is None:
        raise IoFailure(f"cannot read image {path}")
    rgb = cv2.cvtColor(raw, cv2.COLOR_BGR2RGB)
    if rgb.shape[:2] != (WORK_H, WORK_W):
        rgb = cv2.resize(rgb, (WORK_W, WORK_H), interpolation=cv2.INTER_AREA)
    return rgb.astype(np.float32) / 255.0


def load_mask(path: Path | str) -> np.ndarray:
    raw = cv2.imread(str(path), cv2.IMREAD_GRAYSCALE)
    if raw is None:
        raise IoFailure(f"cannot read mask {path}")
    if raw.shape != (WORK_H, WORK_W):
        # nearest neighbour keeps the mask binary
        raw = cv2.resize(raw, (WORK_W, WORK_H), interpolation=cv2.INTER_NEAREST)
    return (raw >= 128).astype(np.uint8)


def save_image(path: Path | str, image: np.ndarray) -> None:
    bgr = cv2.cvtColor((np.clip(image, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8), cv2.COLOR_RGB2BGR)
    if not cv2.imwrite(str(path), bgr):
        raise IoFailure(f"cannot write image {path}")


def save_mask(path: Path | str, mask: np.ndarray) -> None:
    if not cv2.imwrite(str(path), (mask.astype(np.uint8) * 255)):
        raise IoFailure(f"cannot write mask {path}")


def binarize(mask_prob: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """Threshold a probability map into a {0,1} mask (inclusive at the threshold)."""
    if not 0.0 < threshold < 1.0:
        raise InvalidConfig(f"threshold must be in (0,1), got {threshold}")
    return (np.asarray(mask_prob) >= threshold).astype(np.uint8)


class Background(str, Enum):
    FLAT = "FLAT"
    TEXTURED = "TEXTURED"
    GRADIENT = "GRADIENT"
    CLUTTER = "CLUTTER"


class Illumination(str, Enum):
    UNIFORM = "UNIFORM"
    SPOTLIGHT = "SPOTLIGHT"
    LOW_LIGHT = "LOW_LIGHT"


@dataclass
class SyntheticSpec:
    """Parameters for the synthetic caveline image generator.

    Identical (spec, seed) pairs produce byte-identical PNGs. Lines are
    smooth splines through random control points by default; `curved=False`
    draws single straight segments instead (useful for line-recovery tests).
    """

    count: int = 1050
    line_color_low: tuple[float, float, float] = (0.7, 0.6, 0.2)
    line_color_high: tuple[float, float, float] = (1.0, 0.9, 0.5)
    line_thickness_range: tuple[int, int] = (2, 8)
    background: Background = Background.TEXTURED
    distractors: int = 0
    illumination: Illumination = Illumination.UNIFORM
    noise_sigma: float = 0.0
    seed: int = 0
    curved: bool = True

    def validate(self) -> "SyntheticSpec":
        if self.count < 1:
            raise InvalidConfig("count must be >= 1")
        lo, hi = self.line_thickness_range
        if not (1 <= lo <= hi <= 20):
            raise InvalidConfig(f"thickness range must satisfy 1 <= lo <= hi <= 20, got {self.line_thickness_range}")
        for a, b in zip(self.line_color_low, self.line_color_high):
            if a > b:
                raise InvalidConfig("line_color_low must be <= line_color_high per channel")
        return self


def _catmull_rom(points: np.ndarray, samples_per_seg: int = 64) -> np.ndarray:
    """Sample a Catmull-Rom spline through the given control points."""
    pts = np.vstack([points[0], points, points[-1]]).astype(np.float64)
    out = []
    t = np.linspace(0.0, 1.0, samples_per_seg, endpoint=False)
    for i in range(1, len(pts) - 2):
        p0, p1, p2, p3 = pts[i - 1], pts[i], pts[i + 1], pts[i + 2]
        a = 2 * p1
        b = p2 - p0
        c = 2 * p0 - 5 * p1 + 4 * p2 - p3
        d = -p0 + 3 * p1 - 3 * p2 + p3
        seg = 0.5 * (a[None] + b[None] * t[:, None] + c[None] * t[:, None] ** 2 + d[None] * t[:, None] ** 3)
        out.append(seg)
    out.append(pts[-2][None])
    return np.vstack(out)


def _walk_line(canvas: np.ndarray, x0: int, y0: int, x1: int, y1: int) -> None:
    """Set the single-pixel integer line from (x0, y0) to (x1, y1)."""
    h, w = canvas.shape
    dx, sx = abs(x1 - x0), 1 if x0 < x1 else -1
    dy, sy = -abs(y1 - y0), 1 if y0 < y1 else -1
    err = dx + dy
    while True:
        if 0 <= x0 < w and 0 <= y0 < h:
            canvas[y0, x0] = 1
        if x0 == x1 and y0 == y1:
            return
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x0 += sx
        if e2 <= dx:
            err += dx
            y0 += sy


def render_polyline_mask(points: np.ndarray, thickness: int, size: tuple[int, int] = (WORK_H, WORK_W)) -> np.ndarray:
    """Rasterize a polyline into a {0,1} mask. Shared by the generator, its
    oracle, and the verdict ingestion path, so an annotation client can
    reproduce the stored mask bit for bit.

    Width 1 walks the classic integer line; wider brushes set every pixel
    whose squared distance to the nearest segment is at most (thickness/2)^2.
    All brush arithmetic is plain IEEE doubles to keep independent
    implementations byte-identical.
    """
    h, w = size
    canvas = np.zeros((h, w), dtype=np.uint8)
    pts = np.floor(np.asarray(points, dtype=np.float64) + 0.5).astype(np.int64).reshape(-1, 2)
    if len(pts) == 1:
        pts = np.vstack([pts, pts])
    t = int(thickness)
    if t <= 1:
        for (x0, y0), (x1, y1) in zip(pts[:-1], pts[1:]):
            _walk_line(canvas, int(x0), int(y0), int(x1), int(y1))
        return canvas
    r = t / 2.0
    r2 = r * r
    pad = int(math.ceil(r))
    for (x0, y0), (x1, y1) in zip(pts[:-1].astype(np.float64), pts[1:].astype(np.float64)):
        xa = max(0, int(math.floor(min(x0, x1))) - pad)
        xb = min(w - 1, int(math.ceil(max(x0, x1))) + pad)
        ya = max(0, int(math.floor(min(y0, y1))) - pad)
        yb = min(h - 1, int(math.ceil(max(y0, y1))) + pad)
        if xa > xb or ya > yb:
            continue
        ys, xs = np.mgrid[ya : yb + 1, xa : xb + 1].astype(np.float64)
        dx, dy = x1 - x0, y1 - y0
        l2 = dx * dx + dy * dy
        if l2 == 0.0:
            ddx = xs - x0
            ddy = ys - y0
        else:
            s = np.minimum(1.0, np.maximum(0.0, ((xs - x0) * dx + (ys - y0) * dy) / l2))
            ddx = xs - (x0 + s * dx)
            ddy = ys - (y0 + s * dy)
        window = canvas[ya : yb + 1, xa : xb + 1]
        window[ddx * ddx + ddy * ddy <= r2] = 1
    return canvas


def _render_background(rng: np.random.Generator, kind: Background) -> np.ndarray:
    base = rng.uniform(0.05, 0.45, size=3)
    img = np.ones((WORK_H, WORK_W, 3), dtype=np.float32) * base.astype(np.float32)
    if kind == Background.FLAT:
        return img
    if kind == Background.GRADIENT:
        direction = rng.uniform(0, 2 * np.pi)
        xs, ys = np.meshgrid(np.linspace(0, 1, WORK_W), np.linspace(0, 1, WORK_H))
        ramp = (np.cos(direction) * xs + np.sin(direction) * ys).astype(np.float32)
        ramp = (ramp - ramp.min()) / max(float(np.ptp(ramp)), 1e-6)
        return np.clip(img + ramp[..., None] * rng.uniform(0.1, 0.35), 0, 1)
    # TEXTURED and CLUTTER share a low-frequency noise field
    coarse = rng.uniform(0, 1, size=(WORK_H // 30, WORK_W // 30, 3)).astype(np.float32)
    tex = cv2.resize(coarse, (WORK_W, WORK_H), interpolation=cv2.INTER_CUBIC)
    img = np.clip(0.6 * img + 0.4 * tex * rng.uniform(0.3, 0.8), 0, 1)
    if kind == Background.CLUTTER:
        for _ in range(rng.integers(5, 15)):
            center = (int(rng.integers(0, WORK_W)), int(rng.integers(0, WORK_H)))
            radius = int(rng.integers(10, 80))
            color = rng.uniform(0.0, 0.6, size=3).tolist()
            cv2.circle(img, center, radius, color, thickness=-1)
    return img


def _draw_distractors(rng: np.random.Generator, img: np.ndarray, n: int) -> None:
    for _ in range(n):
        kind = rng.integers(0, 3)
        color = rng.uniform(0.0, 0.9, size=3).tolist()
        if kind == 0:
            c = (int(rng.integers(0, WORK_W)), int(rng.integers(0, WORK_H)))
            cv2.circle(img, c, int(rng.integers(5, 40)), color, thickness=-1)
        elif kind == 1:
            p0 = (int(rng.integers(0, WORK_W)), int(rng.integers(0, WORK_H)))
            p1 = (p0[0] + int(rng.integers(-60, 60)), p0[1] + int(rng.integers(-60, 60)))
            cv2.rectangle(img, p0, p1, color, thickness=-1)
        else:
            # short stroke: looks line-like but is not a caveline
            p0 = np.array([rng.integers(0, WORK_W), rng.integers(0, WORK_H)], dtype=np.float64)
            ang = rng.uniform(0, 2 * np.pi)
            p1 = p0 + np.array([np.cos(ang), np.sin(ang)]) * rng.integers(15, 35)
            cv2.line(img, tuple(p0.astype(int)), tuple(p1.astype(int)), color, thickness=int(rng.integers(1, 4)))


def _sample_line_points(rng: np.random.Generator, curved: bool) -> np.ndarray:
    if not curved:
        # straight segment spanning a good chunk of the frame
        while True:
            p0 = rng.uniform([0, 0], [WORK_W - 1, WORK_H - 1])
            p1 = rng.uniform([0, 0], [WORK_W - 1, WORK_H - 1])
            if np.linalg.norm(p1 - p0) >= 250:
                return np.vstack([p0, p1])
    n_ctrl = int(rng.integers(3, 7))
    xs = np.sort(rng.uniform(0, WORK_W - 1, size=n_ctrl))
    ys = rng.uniform(WORK_H * 0.1, WORK_H * 0.9, size=n_ctrl)
    ctrl = np.stack([xs, ys], axis=1)
    return _catmull_rom(ctrl)


def generate_synthetic(
    spec: SyntheticSpec,
    out_dir: Path | str,
    name: str = "synthetic",
    location_tag: str = "synthetic",
) -> DatasetManifest:
    """Render `spec.count` image/mask pairs under `out_dir` and return a validated manifest.

    A `geometry.json` sidecar stores the ground-truth polyline points and
    thickness per sample so line-recovery tests can re-render an oracle mask.
    """
    spec.validate()
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    (out_dir / "masks").mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(spec.seed)
    entries: list[ManifestEntry] = []
    geometry: dict[str, dict] = {}
    for i in range(spec.count):
        sid = f"{name}_{i:05d}"
        img = _render_background(rng, spec.background)
        if spec.distractors:
            _draw_distractors(rng, img, spec.distractors)

        thickness = int(rng.integers(spec.line_thickness_range[0], spec.line_thickness_range[1] + 1))
        points = _sample_line_points(rng, spec.curved)
        mask = render_polyline_mask(points, thickness)
        color = rng.uniform(spec.line_color_low, spec.line_color_high).astype(np.float32)
        img[mask == 1] = color

        if spec.illumination == Illumination.SPOTLIGHT:
            cx, cy = rng.uniform(0.2, 0.8) * WORK_W, rng.uniform(0.2, 0.8) * WORK_H
            xs, ys = np.meshgrid(np.arange(WORK_W), np.arange(WORK_H))
            r = np.sqrt((xs - cx) ** 2 + (ys - cy) ** 2)
            gain = np.exp(-(r / (0.45 * WORK_W)) ** 2).astype(np.float32)
            img = img * (0.25 + 0.75 * gain[..., None])
        elif spec.illumination == Illumination.LOW_LIGHT:
            img = img * 0.3
        if spec.noise_sigma > 0:
            img = img + rng.normal(0, spec.noise_sigma, size=img.shape).astype(np.float32)
        img = np.clip(img, 0.0, 1.0)

        save_image(out_dir / "images" / f"{sid}.png", img)
        save_mask(out_dir / "masks" / f"{sid}.png", mask)
        geometry[sid] = {"points": np.asarray(points).tolist(), "thickness": thickness}
        entries.append(
            ManifestEntry(
                id=sid,
                image=f"images/{sid}.png",
                mask=f"masks/{sid}.png",
                label_kind=LabelKind.HUMAN,
                location_tag=location_tag,
                split=Split.TRAIN,
            )
        )

    (out_dir / "geometry.json").write_text(json.dumps(geometry))
    manifest = DatasetManifest(name, entries, root=out_dir).validate()
    manifest.save(out_dir / "manifest.json")
    return manifest


def assign_splits(
    manifest: DatasetManifest,
    val_fraction: float = 0.1,
    test_fraction: float = 0.0,
    seed: int = 0,
) -> DatasetManifest:
    """Return a copy with ids shuffled into TRAIN/VAL/TEST by the given fractions."""
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(manifest.samples))
    n_val = int(round(val_fraction * len(order)))
    n_test = int(round(test_fraction * len(order)))
    split_of = {}
    for rank, idx in enumerate(order):
        if rank < n_val:
            split_of[idx] = Split.VAL
        elif rank < n_val + n_test:
            split_of[idx] = Split.TEST
        else:
            split_of[idx] = Split.TRAIN
    samples = [
        ManifestEntry(s.id, s.image, s.mask, s.label_kind, s.location_tag, split_of[i])
        for i, s in enumerate(manifest.samples)
    ]
    return DatasetManifest(manifest.name, samples, root=manifest.root)


def leave_one_out_split(
    manifest: DatasetManifest,
    held_out_location: str,
    val_fraction: float = 0.1,
    seed: int = 0,
) -> DatasetManifest:
    """Hold one location out entirely as TEST; split the rest into TRAIN/VAL."""
    rng = np.random.default_rng(seed)
    in_train = [i for i, s in enumerate(manifest.samples) if s.location_tag != held_out_location]
    n_val = max(1, int(round(val_fraction * len(in_train)))) if in_train else 0
    val_set = set(rng.permutation(in_train)[:n_val].tolist()) if in_train else set()
    samples = []
    for i, s in enumerate(manifest.samples):
        if s.location_tag == held_out_location:
            split = Split.TEST
        elif i in val_set:
            split = Split.VAL
        else:
            split = Split.TRAIN
        samples.append(ManifestEntry(s.id, s.image, s.mask, s.label_kind, s.location_tag, split))
    return DatasetManifest(manifest.name, samples, root=manifest.root)


def merge_manifests(name: str, manifests: list[DatasetManifest], root: Path) -> DatasetManifest:
    """Merge manifests (e.g. one per location) into a single one rooted at `root`."""
    root = Path(root)
    samples = []
    for m in manifests:
        rel = Path(m.root).resolve().relative_to(root.resolve())
        for s in m.samples:
            samples.append(
                ManifestEntry(s.id, str(rel / s.image), str(rel / s.mask) if s.mask else None,
                              s.label_kind, s.location_tag, s.split)
            )
    return DatasetManifest(name, samples, root=root).validate()
