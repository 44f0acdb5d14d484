import math

import cv2
import numpy as np
import pytest

from caveline.postproc import (HoughConfig, LineSegment, dominant_line,
                               dominant_polyline, hough_segments,
                               merge_segments, render_overlay)


def line_mask(shape, p0, p1, thickness=1):
    mask = np.zeros(shape, np.uint8)
    cv2.line(mask, p0, p1, 1, thickness)
    return mask


def endpoint_error(seg, p0, p1):
    """Max endpoint distance under the better of the two pairings."""
    direct = max(math.dist(seg.p0, p0), math.dist(seg.p1, p1))
    swapped = max(math.dist(seg.p0, p1), math.dist(seg.p1, p0))
    return min(direct, swapped)


def test_empty_mask():
    assert hough_segments(np.zeros((50, 50), np.uint8)) == []
    assert dominant_line(np.zeros((50, 50), np.uint8)) is None
    assert dominant_polyline(np.zeros((50, 50), np.uint8)) == []


def test_below_threshold_mask():
    # 10 foreground pixels cannot reach the default vote threshold of 30
    mask = line_mask((60, 60), (5, 5), (14, 5))
    assert dominant_line(mask) is None


def test_single_horizontal_line():
    mask = line_mask((100, 300), (20, 50), (220, 50))
    segs = hough_segments(mask)
    assert len(segs) == 1
    assert endpoint_error(segs[0], (20, 50), (220, 50)) <= 2.0
    assert segs[0].votes == pytest.approx(201, abs=2)


def test_diagonal_line():
    mask = line_mask((200, 200), (10, 20), (180, 170))
    line = dominant_line(mask)
    assert line is not None
    assert endpoint_error(line, (10, 20), (180, 170)) <= 3.0


def test_two_perpendicular_lines():
    mask = line_mask((200, 200), (20, 100), (180, 100))
    mask |= line_mask((200, 200), (100, 20), (100, 180))
    segs = merge_segments(hough_segments(mask))
    assert len(segs) == 2
    angles = sorted(abs(s.direction[1]) for s in segs)
    assert angles[0] <= 0.1 and angles[1] >= 0.9


def test_dominant_prefers_stronger_line():
    mask = line_mask((200, 300), (10, 40), (280, 40))   # long
    mask |= line_mask((200, 300), (10, 150), (80, 150))  # short
    line = dominant_line(mask)
    assert endpoint_error(line, (10, 40), (280, 40)) <= 5.0


def test_deterministic():
    rng = np.random.default_rng(5)
    mask = line_mask((150, 250), (15, 30), (230, 120), thickness=3)
    mask |= (rng.random((150, 250)) > 0.97).astype(np.uint8)
    a = dominant_line(mask)
    b = dominant_line(mask)
    assert a.to_dict() == b.to_dict()


def test_merge_collinear_pair():
    a = LineSegment((10.0, 50.0), (100.0, 50.0), 90)
    b = LineSegment((110.0, 50.5), (200.0, 50.5), 90)
    merged = merge_segments([a, b])
    assert len(merged) == 1
    assert merged[0].votes == 180
    assert endpoint_error(merged[0], (10, 50), (200, 50)) <= 1.0


def test_merge_respects_angle_and_distance():
    a = LineSegment((10.0, 50.0), (100.0, 50.0), 90)
    far = LineSegment((10.0, 80.0), (100.0, 80.0), 90)      # parallel but far
    steep = LineSegment((10.0, 50.0), (100.0, 80.0), 90)    # ~18 degrees off
    assert len(merge_segments([a, far])) == 2
    assert len(merge_segments([a, steep])) == 2


def test_noisy_thick_line_recovered():
    rng = np.random.default_rng(2)
    mask = line_mask((270, 480), (40, 60), (430, 200), thickness=5)
    noise = (rng.random((270, 480)) > 0.985).astype(np.uint8)
    line = dominant_line(mask | noise)
    assert line is not None
    assert endpoint_error(line, (40, 60), (430, 200)) <= 8.0


def test_polyline_links_bent_line():
    mask = line_mask((200, 300), (20, 150), (150, 60))
    mask |= line_mask((200, 300), (150, 60), (280, 150))
    chain = dominant_polyline(mask)
    assert len(chain) >= 2
    total = sum(s.length for s in chain)
    assert total >= 0.8 * (math.dist((20, 150), (150, 60)) + math.dist((150, 60), (280, 150)))


def test_render_overlay_shape_and_range():
    image = np.random.default_rng(0).random((60, 80, 3)).astype(np.float32)
    mask = line_mask((60, 80), (5, 30), (70, 30))
    out = render_overlay(image, mask, LineSegment((5.0, 30.0), (70.0, 30.0), 66))
    assert out.shape == image.shape
    assert out.dtype == np.float32
    assert 0.0 <= out.min() and out.max() <= 1.0
    # tinted pixels differ from the input along the line
    assert not np.allclose(out[30, 10], image[30, 10])


def test_hough_config_from_dict_roundtrip():
    cfg = HoughConfig(vote_threshold=12, min_line_length=15.0, seed=3)
    assert HoughConfig.from_dict(cfg.__dict__) == cfg
