"""Dataset manifests and the on-disk keypoint file format.

Manifest: one JSON object per line (UTF-8), keys matching the
ClipManifestRecord fields.  Keypoint file: a text header line
``n_frames n_kp fps`` followed by n_frames lines of 2*n_kp space-separated
reals (x then y per point, pixel coordinates).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

REQUIRED_FIELDS = ("clip_id", "keypoints_path", "audio_path", "speaker_id", "split", "n_frames")
SPLITS = ("train", "val", "test")


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class ClipManifestRecord:
    clip_id: str
    keypoints_path: str
    audio_path: str
    speaker_id: str
    split: str
    n_frames: int
    frames_path: str | None = None
    group_labels: dict | None = None

    def to_json(self) -> str:
        d = {k: v for k, v in asdict(self).items() if v is not None}
        return json.dumps(d, sort_keys=True)


def _parse_record(obj: dict, lineno: int, min_frames: int | None) -> ClipManifestRecord:
    for key in REQUIRED_FIELDS:
        if key not in obj:
            raise ManifestError(f"line {lineno}: missing required field '{key}'")
    if obj["split"] not in SPLITS:
        raise ManifestError(f"line {lineno}: split must be one of {SPLITS}, got {obj['split']!r}")
    n_frames = obj["n_frames"]
    if not isinstance(n_frames, int) or n_frames < 1:
        raise ManifestError(f"line {lineno}: n_frames must be a positive integer")
    if min_frames is not None and n_frames < min_frames:
        raise ManifestError(
            f"line {lineno}: n_frames={n_frames} is below the minimum window of {min_frames} frames"
        )
    known = {f for f in ClipManifestRecord.__dataclass_fields__}
    extra = set(obj) - known
    if extra:
        raise ManifestError(f"line {lineno}: unknown fields {sorted(extra)}")
    return ClipManifestRecord(**obj)


def load_manifest(path, min_frames: int | None = None) -> list[ClipManifestRecord]:
    """Parse a line-delimited manifest; every record is validated.

    ``min_frames`` (typically window_T) rejects clips too short to embed.
    """
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ManifestError(f"line {lineno}: malformed record ({e.msg})") from e
            records.append(_parse_record(obj, lineno, min_frames))
    return records


def save_manifest(records, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(rec.to_json() + "\n")


def write_keypoint_file(path, kps_px: np.ndarray, fps: int) -> None:
    """Write a (T, N, 2) pixel-coordinate array in the text keypoint format."""
    kps_px = np.asarray(kps_px, dtype=float)
    n_frames, n_kp, _ = kps_px.shape
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"{n_frames} {n_kp} {fps}\n")
        for t in range(n_frames):
            f.write(" ".join(f"{v:.6f}" for v in kps_px[t].reshape(-1)) + "\n")


def read_keypoint_file(path) -> tuple[np.ndarray, int]:
    """Read a keypoint file, returning ((T, N, 2) pixel coords, fps)."""
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().split()
        if len(header) != 3:
            raise ManifestError(f"{path}: bad keypoint header, expected 'n_frames n_kp fps'")
        n_frames, n_kp, fps = int(header[0]), int(header[1]), int(header[2])
        data = np.loadtxt(f, dtype=float, ndmin=2)
    if data.shape != (n_frames, 2 * n_kp):
        raise ManifestError(
            f"{path}: keypoint body shape {data.shape} does not match header "
            f"({n_frames} frames x {2 * n_kp} values)"
        )
    return data.reshape(n_frames, n_kp, 2), fps
