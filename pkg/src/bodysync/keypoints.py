"""Keypoint index tables, selection, densification, normalization and
training-time augmentation.

Raw pose files carry the full 33-point body topology of the upstream pose
tracker.  Indices 0..10 are the sparse face/lip points (nose, eyes, ears,
mouth corners) and are dropped for all gesture sets; indices 11..32 are the
22 body points.  When hand or head points are present they are appended
after the 33 pose points, in the order documented per set below.
"""
from __future__ import annotations

import numpy as np

from .config import KeypointSetId, keypoint_set

N_POSE_FULL = 33
FACE_LIP_INDICES = tuple(range(0, 11))   # discarded for every non-face set
POSE22_INDICES = tuple(range(11, 33))

# Raw layouts per set (indices into the per-frame raw array):
#   pose22           raw = 33 pose points
#   pose_hands64     raw = 33 pose + 21 left hand + 21 right hand   (75)
#   pose_upper_head43 raw = 33 pose + 21 upper-head oval points     (54)
#   pose_head58      raw = 33 pose + 36 head oval points            (69)
#   face128          raw = dense face mesh, first 128 points used
#   dense48/70/142   raw = already-densified array (see densify_pose22)
_INDEX_TABLES = {
    "pose22": POSE22_INDICES,
    "pose_hands64": POSE22_INDICES + tuple(range(33, 75)),
    "pose_upper_head43": POSE22_INDICES + tuple(range(33, 54)),
    "pose_head58": POSE22_INDICES + tuple(range(33, 69)),
    "face128": tuple(range(0, 128)),
    "dense48": tuple(range(0, 48)),
    "dense70": tuple(range(0, 70)),
    "dense142": tuple(range(0, 142)),
}

# Skeleton edges over the 22 body points, in local (post-selection) indexing:
# 0/1 shoulders, 2/3 elbows, 4/5 wrists, 6/7 pinkies, 8/9 index fingers,
# 10/11 thumbs, 12/13 hips, 14/15 knees, 16/17 ankles, 18/19 heels,
# 20/21 foot tips.  Even local index = left side, odd = right.
POSE22_EDGES = (
    (0, 1),            # shoulder line
    (0, 2), (2, 4),    # left arm
    (1, 3), (3, 5),    # right arm
    (4, 6), (4, 8), (4, 10),   # left hand stubs
    (5, 7), (5, 9), (5, 11),   # right hand stubs
    (0, 12), (1, 13), (12, 13),  # torso
    (12, 14), (14, 16), (16, 18), (18, 20),  # left leg
    (13, 15), (15, 17), (17, 19), (19, 21),  # right leg
)


def index_table(set_id: KeypointSetId) -> tuple[int, ...]:
    table = _INDEX_TABLES[set_id.name]
    assert len(table) == set_id.count
    return table


def select_keypoints(raw: np.ndarray, set_id: KeypointSetId) -> np.ndarray:
    """Project a (T, N_raw, 2) raw array onto the fixed index list of a set.

    Pure projection: output row i equals input row index_table[i] exactly.
    """
    raw = np.asarray(raw)
    if raw.ndim != 3 or raw.shape[2] != 2:
        raise ValueError(f"raw keypoints must have shape (T, N, 2), got {raw.shape}")
    if not np.all(np.isfinite(raw)):
        raise ValueError("raw keypoints contain non-finite coordinates")
    table = index_table(set_id)
    needed = max(table) + 1
    if raw.shape[1] < needed:
        raise IndexError(
            f"set {set_id.name} needs at least {needed} raw keypoints per frame, "
            f"got {raw.shape[1]}"
        )
    return raw[:, list(table), :]


def densify_pose22(kps22: np.ndarray, target_count: int) -> np.ndarray:
    """Interpolate extra points along the skeleton edges of a (T, 22, 2) array.

    Extra points beyond the 22 joints are spread round-robin over
    POSE22_EDGES in the listed order: with E edges and m extra points, the
    first ``m % E`` edges get ``m // E + 1`` interior points, the rest
    ``m // E``, each placed at evenly spaced fractions along the edge.
    """
    kps22 = np.asarray(kps22, dtype=float)
    if kps22.ndim != 3 or kps22.shape[1:] != (22, 2):
        raise ValueError(f"expected (T, 22, 2) keypoints, got {kps22.shape}")
    extra = target_count - 22
    if extra < 0:
        raise ValueError(f"target_count must be >= 22, got {target_count}")
    edges = POSE22_EDGES
    per_edge = [extra // len(edges)] * len(edges)
    for e in range(extra % len(edges)):
        per_edge[e] += 1
    parts = [kps22]
    for (a, b), m in zip(edges, per_edge):
        if m == 0:
            continue
        fracs = (np.arange(1, m + 1) / (m + 1))[None, :, None]  # (1, m, 1)
        seg = kps22[:, a:a + 1, :] * (1 - fracs) + kps22[:, b:b + 1, :] * fracs
        parts.append(seg)
    return np.concatenate(parts, axis=1)


def normalize_keypoints(raw_px: np.ndarray, height: int, width: int) -> np.ndarray:
    """Map pixel coordinates to [0, 1]: x/W, y/H, then clip."""
    if height <= 0 or width <= 0:
        raise ValueError(f"frame size must be positive, got H={height} W={width}")
    raw_px = np.asarray(raw_px, dtype=float)
    if not np.all(np.isfinite(raw_px)):
        raise ValueError("keypoints contain non-finite coordinates")
    out = np.empty_like(raw_px)
    out[..., 0] = raw_px[..., 0] / width
    out[..., 1] = raw_px[..., 1] / height
    return np.clip(out, 0.0, 1.0)


def augment_keypoints(kps_px: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Window-level keypoint augmentation in pixel space.

    Samples one shift in [-50, 50] px per axis, one rotation in [-10, 10]
    degrees and one scale in [0.7, 1.3], and applies the same similarity
    transform (about the window centroid) to every frame, so the temporal
    motion pattern is preserved.
    """
    kps_px = np.asarray(kps_px, dtype=float)
    shift = rng.uniform(-50.0, 50.0, size=2)
    angle = np.deg2rad(rng.uniform(-10.0, 10.0))
    scale = rng.uniform(0.7, 1.3)
    centroid = kps_px.reshape(-1, 2).mean(axis=0)
    c, s = np.cos(angle), np.sin(angle)
    rot = np.array([[c, -s], [s, c]])
    centered = kps_px - centroid
    return centered @ (scale * rot.T) + centroid + shift
