"""Visual input representations: face-masked RGB frames and rendered
skeleton images."""
from __future__ import annotations

import numpy as np
import cv2

from .config import KeypointSetId
from .keypoints import POSE22_EDGES

MASK_FILL = 0.5       # mid-gray, avoids extreme pixel statistics
MASK_MARGIN = 0.10    # box expanded by 10% per side before filling
STROKE_WIDTH = 2
JOINT_RADIUS = 3

# BGR-ish colors keyed by side; left limbs, right limbs, torso/axial
_COLOR_LEFT = (1.0, 0.3, 0.3)
_COLOR_RIGHT = (0.3, 0.3, 1.0)
_COLOR_MID = (0.3, 1.0, 0.3)


class VideoError(ValueError):
    pass


def mask_face(frames: np.ndarray, face_boxes: np.ndarray) -> np.ndarray:
    """Fill each frame's (expanded) face box with a constant; pixels outside
    the expanded box are untouched.

    frames: (T, 3, H, W) in [0, 1]; face_boxes: (T, 4) pixel (x0, y0, x1, y1).
    """
    frames = np.asarray(frames, dtype=float)
    boxes = np.asarray(face_boxes, dtype=float)
    T, _, H, W = frames.shape
    if boxes.shape != (T, 4):
        raise VideoError(f"need one box per frame: expected {(T, 4)}, got {boxes.shape}")
    out = frames.copy()
    for t in range(T):
        x0, y0, x1, y1 = boxes[t]
        if x1 <= x0 or y1 <= y0:
            raise VideoError(f"frame {t}: degenerate face box {boxes[t].tolist()}")
        if x0 < 0 or y0 < 0 or x1 > W or y1 > H:
            raise VideoError(f"frame {t}: face box {boxes[t].tolist()} outside {W}x{H} frame")
        mx = MASK_MARGIN * (x1 - x0)
        my = MASK_MARGIN * (y1 - y0)
        c0 = max(0, int(np.floor(x0 - mx)))
        c1 = min(W, int(np.ceil(x1 + mx)))
        r0 = max(0, int(np.floor(y0 - my)))
        r1 = min(H, int(np.ceil(y1 + my)))
        out[t, :, r0:r1, c0:c1] = MASK_FILL
    return out


def _edge_color(a: int, b: int):
    sides = {a % 2, b % 2}
    if sides == {0}:
        return _COLOR_LEFT
    if sides == {1}:
        return _COLOR_RIGHT
    return _COLOR_MID


def render_skeleton(kps: np.ndarray, height: int, width: int,
                    edges=POSE22_EDGES, set_id: KeypointSetId | None = None) -> np.ndarray:
    """Rasterize normalized keypoints as stick-figure frames.

    kps: (T, N, 2) coordinates in [0, 1].  Output: (T, 3, H, W) in [0, 1],
    background exactly 0.  Deterministic given (points, edges, H, W).
    """
    kps = np.asarray(kps, dtype=float)
    if not np.all(np.isfinite(kps)):
        raise VideoError("keypoints contain non-finite coordinates")
    if kps.min() < 0.0 or kps.max() > 1.0:
        raise VideoError("keypoints must be normalized to [0, 1] before rendering")
    T, N, _ = kps.shape
    if set_id is not None and N != set_id.count:
        raise VideoError(f"expected {set_id.count} keypoints for {set_id.name}, got {N}")
    edges = [(a, b) for a, b in edges if a < N and b < N]
    out = np.zeros((T, 3, height, width), dtype=float)
    for t in range(T):
        img = np.zeros((height, width, 3), dtype=np.float32)
        px = np.round(kps[t] * [width - 1, height - 1]).astype(int)
        for a, b in edges:
            cv2.line(img, tuple(px[a]), tuple(px[b]), _edge_color(a, b), STROKE_WIDTH)
        for j in range(N):
            color = _COLOR_LEFT if j % 2 == 0 else _COLOR_RIGHT
            cv2.circle(img, tuple(px[j]), JOINT_RADIUS, color, -1)
        out[t] = img.transpose(2, 0, 1)
    return out
