"""Post-processing of raw binary predictions into line geometry.

A seeded probabilistic Hough transform extracts candidate straight segments
from the mask; pairwise merging collapses near-collinear candidates; the
surviving segment with maximal accumulator support is the dominant line.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import cv2
import numpy as np


@dataclass
class LineSegment:
    p0: tuple[float, float]  # (x, y)
    p1: tuple[float, float]
    votes: int

    @property
    def length(self) -> float:
        return math.dist(self.p0, self.p1)

    @property
    def direction(self) -> tuple[float, float]:
        d = (self.p1[0] - self.p0[0], self.p1[1] - self.p0[1])
        n = math.hypot(*d)
        return (d[0] / n, d[1] / n)

    @property
    def carrier_rho(self) -> float:
        """Distance of the carrier line from the image origin."""
        dx, dy = self.direction
        # normal is (dy, -dx); rho = p0 . normal
        return abs(self.p0[0] * dy - self.p0[1] * dx)

    def to_dict(self) -> dict:
        return {"p0": list(self.p0), "p1": list(self.p1), "votes": self.votes}


@dataclass
class HoughConfig:
    rho_res: float = 1.0
    theta_res: float = math.pi / 180
    vote_threshold: int = 30
    min_line_length: float = 40.0
    max_line_gap: float = 10.0
    merge_distance: float = 5.0
    merge_angle: float = math.radians(5.0)
    iterations: int = 3
    seed: int = 0

    @classmethod
    def from_dict(cls, d: dict) -> "HoughConfig":
        return cls(**d)


def _support_count(mask: np.ndarray, p0, p1, rho_res: float) -> int:
    """Foreground pixels within rho_res of the carrier between the endpoints."""
    stencil = np.zeros_like(mask)
    thickness = 2 * int(math.ceil(rho_res)) + 1
    cv2.line(stencil, tuple(np.round(p0).astype(int)), tuple(np.round(p1).astype(int)), 1, thickness)
    return int(np.logical_and(stencil, mask).sum())


def _walk(present: np.ndarray, start: tuple[int, int], direction: tuple[float, float],
          max_gap: float, lateral: int) -> tuple[tuple[int, int], tuple[int, int], list[tuple[int, int]]]:
    """March from `start` along +/- direction over still-present pixels,
    tolerating gaps up to max_gap; returns endpoints and the covered pixels."""
    h, w = present.shape
    nx, ny = -direction[1], direction[0]  # unit normal for lateral probing
    covered = []
    ends = []
    for sign in (1.0, -1.0):
        gap = 0
        t = 0.0
        last_hit = start
        while True:
            t += 1.0
            px = start[0] + sign * t * direction[0]
            py = start[1] + sign * t * direction[1]
            hit = None
            for off in range(-lateral, lateral + 1):
                x = int(round(px + off * nx))
                y = int(round(py + off * ny))
                if 0 <= x < w and 0 <= y < h and present[y, x]:
                    hit = (x, y)
                    break
            if hit is not None:
                last_hit = hit
                covered.append(hit)
                gap = 0
            else:
                gap += 1
                if gap > max_gap:
                    break
        ends.append(last_hit)
    return ends[1], ends[0], covered + [start]


def _refine_endpoints(mask: np.ndarray, p0, p1, lateral: int,
                      max_gap: float) -> tuple[tuple[float, float], tuple[float, float]]:
    """Trim a walked extent to the densest supported run along its carrier.

    The raw walk can overrun the true endpoints through sparse noise. Here the
    per-step foreground count is smoothed and thresholded at half its robust
    peak, and the longest run of dense steps (tolerating gaps up to max_gap)
    gives the refined endpoints.
    """
    h, w = mask.shape
    length = math.dist(p0, p1)
    steps = int(round(length))
    if steps < 2:
        return p0, p1
    dx = (p1[0] - p0[0]) / length
    dy = (p1[1] - p0[1]) / length
    nx, ny = -dy, dx
    ts = np.arange(steps + 1, dtype=np.float64)
    counts = np.zeros(steps + 1, dtype=np.float64)
    for off in range(-lateral, lateral + 1):
        px = np.round(p0[0] + ts * dx + off * nx).astype(int)
        py = np.round(p0[1] + ts * dy + off * ny).astype(int)
        ok = (px >= 0) & (px < w) & (py >= 0) & (py < h)
        counts[ok] += mask[py[ok], px[ok]]
    win = max(5, int(round(max_gap)))
    kernel = np.ones(win)
    coverage = np.convolve(np.ones_like(counts), kernel, "same")
    smooth = np.convolve(counts, kernel, "same") / coverage
    peak = float(np.percentile(smooth, 95))
    if peak <= 0:
        return p0, p1
    dense = np.nonzero(smooth >= 0.5 * peak)[0]
    if len(dense) == 0:
        return p0, p1
    # split where consecutive dense steps are farther apart than max_gap,
    # keep the run with the most support
    breaks = np.nonzero(np.diff(dense) > max_gap)[0]
    runs = np.split(dense, breaks + 1)
    best = max(runs, key=len)
    t_lo, t_hi = float(best[0]), float(best[-1])
    return ((p0[0] + t_lo * dx, p0[1] + t_lo * dy),
            (p0[0] + t_hi * dx, p0[1] + t_hi * dy))


def hough_segments(mask: np.ndarray, config: HoughConfig = HoughConfig()) -> list[LineSegment]:
    """Extract straight segments from a binary mask.

    Randomized point selection is driven by config.seed, so equal inputs give
    equal outputs. Each returned segment has at least vote_threshold
    supporting foreground pixels, length >= min_line_length, and no internal
    gap longer than max_line_gap.

    A line mask cannot plausibly cover a large share of the image, so when the
    foreground fraction exceeds 15 percent the mask is treated as salt-noisy
    and a 3x3 morphological opening strips the isolated speckle first.
    """
    mask = np.asarray(mask).astype(bool)
    if mask.mean() > 0.15:
        opened = cv2.morphologyEx(mask.astype(np.uint8), cv2.MORPH_OPEN,
                                  np.ones((3, 3), np.uint8))
        mask = opened.astype(bool)
    ys, xs = np.nonzero(mask)
    if len(xs) == 0:
        return []

    thetas = np.arange(0.0, math.pi, config.theta_res)
    cos_t, sin_t = np.cos(thetas), np.sin(thetas)
    h, w = mask.shape
    rho_max = math.hypot(h, w)
    n_rho = int(2 * rho_max / config.rho_res) + 1
    acc = np.zeros((len(thetas), n_rho), dtype=np.int32)

    rng = np.random.default_rng(config.seed)
    order = rng.permutation(len(xs))
    present = mask.copy()
    voted = np.zeros_like(mask)
    lateral = int(round(config.rho_res))

    def rho_idx(x: float, y: float) -> np.ndarray:
        rho = x * cos_t + y * sin_t
        return ((rho + rho_max) / config.rho_res).astype(np.int64)

    segments: list[LineSegment] = []
    for k in order:
        x, y = int(xs[k]), int(ys[k])
        if not present[y, x]:
            continue
        idx = rho_idx(x, y)
        acc[np.arange(len(thetas)), idx] += 1
        voted[y, x] = True
        bins = acc[np.arange(len(thetas)), idx]
        t_best = int(np.argmax(bins))
        if bins[t_best] < config.vote_threshold:
            continue
        direction = (-float(sin_t[t_best]), float(cos_t[t_best]))
        p0, p1, covered = _walk(present, (x, y), direction, config.max_line_gap, lateral)
        # erase the walked stroke and retract its votes
        stencil = np.zeros((h, w), dtype=np.uint8)
        cv2.line(stencil, p0, p1, 1, 2 * lateral + 1)
        erase = np.logical_and(stencil.astype(bool), present)
        eys, exs = np.nonzero(np.logical_and(erase, voted))
        for ex, ey in zip(exs, eys):
            acc[np.arange(len(thetas)), rho_idx(int(ex), int(ey))] -= 1
            voted[ey, ex] = False
        present[erase] = False
        q0, q1 = _refine_endpoints(mask, (float(p0[0]), float(p0[1])),
                                   (float(p1[0]), float(p1[1])), lateral,
                                   config.max_line_gap)
        if math.dist(q0, q1) < config.min_line_length:
            continue
        support = _support_count(mask, q0, q1, config.rho_res)
        if support < config.vote_threshold:
            continue
        segments.append(LineSegment(q0, q1, support))
    return segments


def _acute_angle(a: LineSegment, b: LineSegment) -> float:
    da, db = a.direction, b.direction
    dot = abs(da[0] * db[0] + da[1] * db[1])
    return math.acos(min(1.0, dot))


def _carrier_distance(a: LineSegment, b: LineSegment) -> float:
    """Max perpendicular distance of b's endpoints to a's carrier line."""
    dx, dy = a.direction
    dists = []
    for p in (b.p0, b.p1):
        vx, vy = p[0] - a.p0[0], p[1] - a.p0[1]
        dists.append(abs(vx * dy - vy * dx))
    return max(dists)


def _merge_pair(a: LineSegment, b: LineSegment) -> LineSegment:
    ref = a if (a.votes, a.length) >= (b.votes, b.length) else b
    dx, dy = ref.direction
    pts = [a.p0, a.p1, b.p0, b.p1]
    ts = [(p[0] - ref.p0[0]) * dx + (p[1] - ref.p0[1]) * dy for p in pts]
    lo, hi = min(ts), max(ts)
    p0 = (ref.p0[0] + lo * dx, ref.p0[1] + lo * dy)
    p1 = (ref.p0[0] + hi * dx, ref.p0[1] + hi * dy)
    return LineSegment(p0, p1, a.votes + b.votes)


def merge_segments(segments: list[LineSegment], config: HoughConfig = HoughConfig()) -> list[LineSegment]:
    """Merge near-collinear segment pairs (acute angle <= merge_angle, carrier
    distance <= merge_distance) until stable or the round budget is spent."""
    segs = list(segments)
    for _ in range(max(config.iterations, 1)):
        changed = False
        i = 0
        while i < len(segs):
            j = i + 1
            while j < len(segs):
                a, b = segs[i], segs[j]
                if _acute_angle(a, b) <= config.merge_angle and (
                    _carrier_distance(a, b) <= config.merge_distance
                    or _carrier_distance(b, a) <= config.merge_distance
                ):
                    segs[i] = _merge_pair(a, b)
                    segs.pop(j)
                    changed = True
                else:
                    j += 1
            i += 1
        if not changed:
            break
    return segs


def dominant_line(mask: np.ndarray, config: HoughConfig = HoughConfig()) -> Optional[LineSegment]:
    """Best-supported line after extraction and merging; None when the mask
    carries less evidence than vote_threshold."""
    segs = merge_segments(hough_segments(mask, config), config)
    if not segs:
        return None
    return max(segs, key=lambda s: (s.votes, s.length, -s.carrier_rho))


def dominant_polyline(mask: np.ndarray, config: HoughConfig = HoughConfig(),
                      link_distance: float = 30.0) -> list[LineSegment]:
    """Chain of segments greedily linked end-to-end starting from the dominant
    one; suits curved lines that a single segment cannot span."""
    segs = merge_segments(hough_segments(mask, config), config)
    if not segs:
        return []
    chain = [max(segs, key=lambda s: (s.votes, s.length, -s.carrier_rho))]
    remaining = [s for s in segs if s is not chain[0]]
    grew = True
    while grew and remaining:
        grew = False
        for end_attr, idx in (("p1", -1), ("p0", 0)):
            tip = getattr(chain[idx], end_attr)
            best, best_d = None, link_distance
            for s in remaining:
                for p in (s.p0, s.p1):
                    d = math.dist(tip, p)
                    if d < best_d:
                        best, best_d = s, d
            if best is not None:
                remaining.remove(best)
                chain.append(best) if idx == -1 else chain.insert(0, best)
                grew = True
    return chain


def render_overlay(image: np.ndarray, mask: np.ndarray,
                   line: Optional[LineSegment] = None) -> np.ndarray:
    """Tint predicted pixels over the input and draw the dominant line."""
    overlay = (np.clip(image, 0, 1) * 255).astype(np.uint8).copy()
    tint = overlay.copy()
    tint[np.asarray(mask).astype(bool)] = (255, 64, 64)
    overlay = cv2.addWeighted(overlay, 0.5, tint, 0.5, 0)
    if line is not None:
        cv2.line(overlay, tuple(np.round(line.p0).astype(int)),
                 tuple(np.round(line.p1).astype(int)), (64, 255, 64), 2)
    return overlay.astype(np.float32) / 255.0
