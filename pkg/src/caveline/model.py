"""Caveline segmentation network: hierarchical conv backbone, transformer
refinement over patch embeddings, and an upsampling prediction head.

Two variants are provided. LIGHT uses a mobile-style encoder (16-filter stem,
15 inverted-residual bottlenecks) with a mirrored six-block decoder producing
48 feature channels at half input resolution. BASE compound-scales the same
encoder-decoder (wider and deeper) to 128 channels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from enum import Enum
from pathlib import Path
from typing import Optional

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import InvalidConfig, ShapeMismatch

CHECKPOINT_MAGIC = "caveline-ckpt"
CHECKPOINT_VERSION = 1


class Variant(str, Enum):
    LIGHT = "LIGHT"
    BASE = "BASE"
    MICRO = "MICRO"  # reduced-width twin of LIGHT for fast tests


@dataclass
class ModelConfig:
    variant: Variant = Variant.LIGHT
    backbone_channels: int = 48  # N: channels delivered to the refiner
    patch_size: int = 16
    attn_layers: int = 4
    attn_heads: int = 8
    embed_dim: int = 344  # tuned so LIGHT lands on the 12.67M parameter budget
    mlp_ratio: float = 2.0
    input_size: tuple[int, int] = (960, 540)  # (W, H)
    width_mult: float = 1.0
    depth_mult: float = 1.0
    decoder_channels: tuple[int, ...] = (96, 64, 48, 48)  # four up blocks; two refine blocks follow

    @property
    def feature_size(self) -> tuple[int, int]:
        return (self.input_size[0] // 2, self.input_size[1] // 2)

    def validate(self) -> "ModelConfig":
        if self.variant == Variant.LIGHT and self.backbone_channels != 48:
            raise InvalidConfig("LIGHT variant requires 48 backbone channels")
        if self.variant == Variant.BASE and self.backbone_channels != 128:
            raise InvalidConfig("BASE variant requires 128 backbone channels")
        if self.embed_dim % self.attn_heads != 0:
            raise InvalidConfig("embed_dim must be divisible by attn_heads")
        if self.input_size[0] % 2 or self.input_size[1] % 2:
            raise InvalidConfig("input size must be even")
        return self

    @classmethod
    def light(cls) -> "ModelConfig":
        return cls(variant=Variant.LIGHT).validate()

    @classmethod
    def base(cls) -> "ModelConfig":
        return cls(
            variant=Variant.BASE,
            backbone_channels=128,
            embed_dim=384,
            width_mult=1.75,
            depth_mult=2.0,
            decoder_channels=(192, 160, 128, 128),
        ).validate()

    @classmethod
    def micro(cls, input_size: tuple[int, int] = (192, 108)) -> "ModelConfig":
        return cls(
            variant=Variant.MICRO,
            backbone_channels=8,
            patch_size=8,
            attn_layers=2,
            attn_heads=2,
            embed_dim=16,
            input_size=input_size,
            width_mult=0.25,
            decoder_channels=(12, 12, 8, 8),
        ).validate()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["variant"] = self.variant.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["variant"] = Variant(d["variant"])
        d.pop("feature_size", None)
        for key in ("input_size", "decoder_channels"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d).validate()


@dataclass
class PredictionBatch:
    probs: np.ndarray  # B x H x W float32 in [0, 1]
    sample_ids: list[str] = field(default_factory=list)


def _make_divisible(v: float, divisor: int = 4) -> int:
    return max(divisor, int(v + divisor / 2) // divisor * divisor)


class SqueezeExcite(nn.Module):
    def __init__(self, ch: int, reduction: int = 4):
        super().__init__()
        squeezed = _make_divisible(ch / reduction)
        self.fc1 = nn.Conv2d(ch, squeezed, 1)
        self.fc2 = nn.Conv2d(squeezed, ch, 1)

    def forward(self, x):
        s = F.adaptive_avg_pool2d(x, 1)
        s = F.relu(self.fc1(s))
        s = F.hardsigmoid(self.fc2(s))
        return x * s


class Bottleneck(nn.Module):
    """Inverted residual block: 1x1 expand, depthwise, optional SE, 1x1 project."""

    def __init__(self, in_ch, exp_ch, out_ch, kernel, stride, use_se, use_hs):
        super().__init__()
        act = nn.Hardswish if use_hs else nn.ReLU
        self.use_res = stride == 1 and in_ch == out_ch
        layers = []
        if exp_ch != in_ch:
            layers += [nn.Conv2d(in_ch, exp_ch, 1, bias=False), nn.BatchNorm2d(exp_ch), act()]
        layers += [
            nn.Conv2d(exp_ch, exp_ch, kernel, stride, padding=kernel // 2, groups=exp_ch, bias=False),
            nn.BatchNorm2d(exp_ch),
        ]
        if use_se:
            layers.append(SqueezeExcite(exp_ch))
        layers += [act(), nn.Conv2d(exp_ch, out_ch, 1, bias=False), nn.BatchNorm2d(out_ch)]
        self.block = nn.Sequential(*layers)

    def forward(self, x):
        out = self.block(x)
        return x + out if self.use_res else out


# (kernel, expansion, out_ch, SE, hardswish, stride) -- 15 bottleneck rows
_BOTTLENECK_TABLE = [
    (3, 16, 16, False, False, 1),
    (3, 64, 24, False, False, 2),
    (3, 72, 24, False, False, 1),
    (5, 72, 40, True, False, 2),
    (5, 120, 40, True, False, 1),
    (5, 120, 40, True, False, 1),
    (3, 240, 80, False, True, 2),
    (3, 200, 80, False, True, 1),
    (3, 184, 80, False, True, 1),
    (3, 184, 80, False, True, 1),
    (3, 480, 112, True, True, 1),
    (3, 672, 112, True, True, 1),
    (5, 672, 160, True, True, 2),
    (5, 960, 160, True, True, 1),
    (5, 960, 160, True, True, 1),
]


class Encoder(nn.Module):
    """Mobile-style hierarchical encoder; width/depth multipliers allow
    compound scaling for the BASE variant."""

    def __init__(self, width_mult: float = 1.0, depth_mult: float = 1.0):
        super().__init__()
        stem_ch = _make_divisible(16 * width_mult)
        self.stem = nn.Sequential(
            nn.Conv2d(3, stem_ch, 3, stride=2, padding=1, bias=False),
            nn.BatchNorm2d(stem_ch),
            nn.Hardswish(),
        )
        self.stages = nn.ModuleList()  # one group of blocks per resolution
        self.stage_out_channels: list[int] = []
        in_ch = stem_ch
        current: list[nn.Module] = []
        for kernel, exp, out, se, hs, stride in _BOTTLENECK_TABLE:
            repeats = max(1, int(round(depth_mult))) if stride == 1 else 1
            exp_ch = _make_divisible(exp * width_mult)
            out_ch = _make_divisible(out * width_mult)
            for r in range(repeats):
                s = stride if r == 0 else 1
                if s == 2 and current:
                    self.stages.append(nn.Sequential(*current))
                    self.stage_out_channels.append(in_ch)
                    current = []
                current.append(Bottleneck(in_ch, exp_ch, out_ch, kernel, s, se, hs))
                in_ch = out_ch
        self.stages.append(nn.Sequential(*current))
        self.stage_out_channels.append(in_ch)
        self.out_channels = in_ch

    def forward(self, x) -> list[torch.Tensor]:
        feats = [self.stem(x)]
        for stage in self.stages:
            feats.append(stage(feats[-1]))
        return feats  # [1/2 stem, 1/2, 1/4, 1/8, 1/16, 1/32]


class Decoder(nn.Module):
    """Mirrored decoder: four upsample+skip conv blocks back to half input
    resolution, then two refinement convs to the requested channel count."""

    def __init__(self, skip_channels: list[int], up_channels: tuple[int, ...], out_channels: int):
        super().__init__()
        # skip_channels: encoder outputs deepest-first, e.g. [1/32, 1/16, 1/8, 1/4]
        self.ups = nn.ModuleList()
        in_ch = skip_channels[0]
        for skip_ch, out_ch in zip(skip_channels[1:], up_channels):
            self.ups.append(
                nn.Sequential(
                    nn.Conv2d(in_ch + skip_ch, out_ch, 3, padding=1, bias=False),
                    nn.BatchNorm2d(out_ch),
                    nn.ReLU(),
                )
            )
            in_ch = out_ch
        self.refine = nn.Sequential(
            nn.Conv2d(in_ch, out_channels, 3, padding=1, bias=False),
            nn.BatchNorm2d(out_channels),
            nn.ReLU(),
            nn.Conv2d(out_channels, out_channels, 3, padding=1, bias=False),
            nn.BatchNorm2d(out_channels),
            nn.ReLU(),
        )

    def forward(self, skips: list[torch.Tensor]) -> torch.Tensor:
        x = skips[0]
        for up, skip in zip(self.ups, skips[1:]):
            x = F.interpolate(x, size=skip.shape[-2:], mode="bilinear", align_corners=False)
            x = up(torch.cat([x, skip], dim=1))
        return self.refine(x)


class TransformerLayer(nn.Module):
    def __init__(self, dim: int, heads: int, mlp_ratio: float):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = nn.MultiheadAttention(dim, heads, batch_first=True)
        self.norm2 = nn.LayerNorm(dim)
        hidden = int(dim * mlp_ratio)
        self.mlp = nn.Sequential(nn.Linear(dim, hidden), nn.GELU(), nn.Linear(hidden, dim))

    def forward(self, x):
        a, _ = self.attn(self.norm1(x), self.norm1(x), self.norm1(x), need_weights=False)
        x = x + a
        return x + self.mlp(self.norm2(x))


class ViTRefiner(nn.Module):
    """Global-context refinement of backbone features.

    Features are patch-embedded (strided conv), summed with learned position
    embeddings, passed through a stack of self-attention layers, normalized,
    3x3-convolved in token-grid space, and projected back: the per-token
    embedding is dotted with a bank of output embeddings of which only the
    first N (= feature channel count) are kept. The patch-level maps are
    bilinearly expanded to the input grid and added residually.
    """

    def __init__(self, channels: int, feature_size: tuple[int, int], patch_size: int,
                 embed_dim: int, layers: int, heads: int, mlp_ratio: float):
        super().__init__()
        w, h = feature_size
        self.patch = patch_size
        self.pad_w = (patch_size - w % patch_size) % patch_size
        self.pad_h = (patch_size - h % patch_size) % patch_size
        self.grid = ((w + self.pad_w) // patch_size, (h + self.pad_h) // patch_size)
        n_tokens = self.grid[0] * self.grid[1]

        self.patch_embed = nn.Conv2d(channels, embed_dim, patch_size, stride=patch_size)
        self.pos_embed = nn.Parameter(torch.zeros(1, n_tokens, embed_dim))
        self.layers = nn.ModuleList(TransformerLayer(embed_dim, heads, mlp_ratio) for _ in range(layers))
        self.norm = nn.LayerNorm(embed_dim)
        self.grid_conv = nn.Conv2d(embed_dim, embed_dim, 3, padding=1)
        self.out_embeddings = nn.Conv2d(embed_dim, embed_dim, 1)  # only first `channels` outputs used
        self.channels = channels

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, c, h, w = x.shape
        if c != self.channels:
            raise ShapeMismatch(f"expected {self.channels} channels, got {c}")
        padded = F.pad(x, (0, self.pad_w, 0, self.pad_h))
        tokens = self.patch_embed(padded)  # B x E x gh x gw
        gh, gw = tokens.shape[-2:]
        seq = tokens.flatten(2).transpose(1, 2) + self.pos_embed
        for layer in self.layers:
            seq = layer(seq)
        seq = self.norm(seq)
        grid = seq.transpose(1, 2).reshape(b, -1, gh, gw)
        grid = self.grid_conv(grid)
        projected = self.out_embeddings(grid)[:, : self.channels]  # drop remaining embeddings
        up = F.interpolate(projected, scale_factor=self.patch, mode="bilinear", align_corners=False)
        return x + up[:, :, :h, :w]


class CaveLineNet(nn.Module):
    """Full segmentation model: encoder-decoder backbone, refiner, prediction head."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        config.validate()
        self.config = config
        self.encoder = Encoder(config.width_mult, config.depth_mult)
        # decoder consumes encoder stage outputs deepest-first
        skip_chs = self.encoder.stage_out_channels[::-1]
        self.decoder = Decoder(skip_chs[: len(config.decoder_channels) + 1],
                               config.decoder_channels, config.backbone_channels)
        self.refiner = ViTRefiner(
            channels=config.backbone_channels,
            feature_size=config.feature_size,
            patch_size=config.patch_size,
            embed_dim=config.embed_dim,
            layers=config.attn_layers,
            heads=config.attn_heads,
            mlp_ratio=config.mlp_ratio,
        )
        self.head_conv = nn.Conv2d(config.backbone_channels, 1, 1)
        # zero init: an untrained model predicts 0.5 everywhere
        nn.init.zeros_(self.head_conv.weight)
        nn.init.zeros_(self.head_conv.bias)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        w, h = self.config.input_size
        if x.shape[-2:] != (h, w) or x.shape[1] != 3:
            raise ShapeMismatch(f"expected Bx3x{h}x{w}, got {tuple(x.shape)}")
        stem_and_stages = self.encoder(x)
        skips = stem_and_stages[1:][::-1]  # stage outputs deepest-first
        feats = self.decoder(skips[: len(self.config.decoder_channels) + 1])
        feats = self.refiner(feats)
        up = F.interpolate(feats, size=(h, w), mode="bilinear", align_corners=False)
        return torch.sigmoid(self.head_conv(up)).squeeze(1)


def build_model(config: ModelConfig) -> CaveLineNet:
    return CaveLineNet(config)


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters() if p.requires_grad)


def predict(model: CaveLineNet, batch, sample_ids: Optional[list[str]] = None,
            micro_batch: int = 2) -> PredictionBatch:
    """Run inference on a B x H x W x 3 array of [0,1] images.

    Deterministic: the model is switched to eval mode and gradients are off.
    """
    arr = np.asarray(batch, dtype=np.float32)
    w, h = model.config.input_size
    if arr.ndim != 4 or arr.shape[1:] != (h, w, 3):
        raise ShapeMismatch(f"expected Bx{h}x{w}x3, got {arr.shape}")
    ids = sample_ids if sample_ids is not None else [str(i) for i in range(arr.shape[0])]
    if arr.shape[0] == 0:
        return PredictionBatch(np.zeros((0, h, w), dtype=np.float32), [])
    model.eval()
    outs = []
    with torch.no_grad():
        for i in range(0, arr.shape[0], micro_batch):
            chunk = torch.from_numpy(arr[i : i + micro_batch]).permute(0, 3, 1, 2)
            outs.append(model(chunk).numpy())
    return PredictionBatch(np.concatenate(outs, axis=0), ids)


def save_checkpoint(model: CaveLineNet, path: Path | str) -> None:
    torch.save(
        {
            "format": CHECKPOINT_MAGIC,
            "version": CHECKPOINT_VERSION,
            "config": model.config.to_dict(),
            "state_dict": model.state_dict(),
        },
        str(path),
    )


def load_checkpoint(path: Path | str) -> CaveLineNet:
    blob = torch.load(str(path), map_location="cpu", weights_only=False)
    if blob.get("format") != CHECKPOINT_MAGIC:
        raise InvalidConfig(f"{path} is not a caveline checkpoint")
    if blob.get("version") != CHECKPOINT_VERSION:
        raise InvalidConfig(f"unsupported checkpoint version {blob.get('version')}")
    model = CaveLineNet(ModelConfig.from_dict(blob["config"]))
    model.load_state_dict(blob["state_dict"])
    return model
