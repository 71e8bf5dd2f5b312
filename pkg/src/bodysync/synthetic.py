"""Desk-scale synthetic clips with controllable gesture-speech correlation.

Audio is a sequence of amplitude-modulated tone bursts.  In correlated mode
the wrists move on small circles with angular speed proportional to the
burst envelope, so mean keypoint speed tracks the audio envelope exactly;
``gesture_sparsity`` controls the fraction of bursts that the gesture
responds to, modelling speakers with less prominent gestures.

Offset sign convention (used consistently by the generator, the
cross-correlation oracle, and offset prediction): a positive
``injected_offset_frames`` D means the audio synchronized with video frame
i sits D frames later in the audio stream, so motion at frame i follows
envelope index i + D and the recovered best offset is +D.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import Waveform, SAMPLE_RATE, save_wav
from .manifest import ClipManifestRecord, save_manifest, write_keypoint_file

FPS = 25
FRAME_H = 270
FRAME_W = 480
SAMPLES_PER_FRAME = SAMPLE_RATE // FPS   # 640
TONE_HZ = 220.0
MAX_OFFSET = 50

# Base standing pose in 480x270 pixel coordinates, local 22-point indexing
# (0/1 shoulders, 2/3 elbows, 4/5 wrists, 6..11 hand stubs, 12/13 hips,
# 14..21 legs/feet).  Even index = left, odd = right.
BASE_POSE_22 = np.array([
    [205, 90], [275, 90],      # shoulders
    [185, 130], [295, 130],    # elbows
    [175, 165], [305, 165],    # wrists
    [170, 175], [310, 175],    # pinkies
    [168, 172], [312, 172],    # index fingers
    [172, 170], [308, 170],    # thumbs
    [215, 170], [265, 170],    # hips
    [212, 215], [268, 215],    # knees
    [210, 255], [270, 255],    # ankles
    [207, 262], [273, 262],    # heels
    [215, 263], [265, 263],    # foot tips
], dtype=float)

WRIST_L, WRIST_R = 4, 5
ELBOW_L, ELBOW_R = 2, 3


class SyntheticError(ValueError):
    pass


@dataclass(frozen=True)
class SyntheticClipSpec:
    seed: int
    duration_s: float = 10.0
    mode: str = "correlated"
    injected_offset_frames: int = 0
    gesture_sparsity: float = 1.0
    n_kp: int = 22

    def __post_init__(self):
        if abs(self.injected_offset_frames) > MAX_OFFSET:
            raise SyntheticError(
                f"injected_offset_frames must satisfy |offset| <= {MAX_OFFSET}"
            )
        if self.duration_s < 4.0:
            raise SyntheticError("duration must be >= 4 seconds")
        if self.mode not in ("correlated", "uncorrelated"):
            raise SyntheticError(f"unknown mode {self.mode!r}")
        if not 0.0 <= self.gesture_sparsity <= 1.0:
            raise SyntheticError("gesture_sparsity must be in [0, 1]")


@dataclass(frozen=True)
class SyntheticClip:
    spec: SyntheticClipSpec
    waveform: Waveform
    keypoints_px: np.ndarray    # (n_frames, 22, 2) pixel coordinates
    audio_envelope: np.ndarray  # (n_frames,) ground-truth 25 Hz envelope


def _burst_envelope(n_frames: int, pad: int, rng: np.random.Generator,
                    keep_prob: float = 1.0):
    """Raised-cosine tone bursts over an index range [-pad, n_frames + pad).

    Returns (full envelope, gated envelope) where the gated version keeps
    each burst with probability keep_prob (the gesture-active subset).
    """
    total = n_frames + 2 * pad
    env = np.zeros(total)
    gated = np.zeros(total)
    i = int(rng.uniform(0, 10))
    while i < total:
        burst_len = int(rng.uniform(0.3, 0.8) * FPS)
        amp = rng.uniform(0.6, 1.0)
        shape = amp * np.sin(np.linspace(0, np.pi, burst_len)) ** 2
        j = min(total, i + burst_len)
        env[i:j] += shape[: j - i]
        if rng.uniform() < keep_prob:
            gated[i:j] += shape[: j - i]
        i = j + int(rng.uniform(0.2, 0.9) * FPS)
    return env, gated


def generate_clip(spec: SyntheticClipSpec) -> SyntheticClip:
    """Deterministic clip synthesis; same spec -> bit-identical outputs."""
    rng = np.random.default_rng(spec.seed)
    n_frames = int(round(spec.duration_s * FPS))
    pad = MAX_OFFSET + 10
    env_full, env_gated = _burst_envelope(n_frames, pad, rng, spec.gesture_sparsity)

    if spec.mode == "uncorrelated":
        # motion follows an independent burst schedule
        motion_rng = np.random.default_rng(spec.seed + 7_919_001)
        _, env_gated = _burst_envelope(n_frames, pad, motion_rng, spec.gesture_sparsity)

    # audio from the full envelope over the visible frame range
    env25 = env_full[pad: pad + n_frames]
    n_samples = n_frames * SAMPLES_PER_FRAME
    t = np.arange(n_samples) / SAMPLE_RATE
    frame_times = (np.arange(n_frames) + 0.5) / FPS
    env_up = np.interp(t, frame_times, env25)
    samples = 0.8 * env_up * np.sin(2 * np.pi * TONE_HZ * t)

    # motion activation: envelope index i + offset drives video frame i
    idx = np.arange(n_frames) + spec.injected_offset_frames + pad
    act = env_gated[idx]

    # circular wrist motion: angular speed proportional to activation, so
    # keypoint speed tracks the (shifted) envelope
    omega = 0.9
    theta = np.cumsum(omega * act) + rng.uniform(0, 2 * np.pi)
    radius = 22.0
    kps = np.tile(BASE_POSE_22, (n_frames, 1, 1))
    circle = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    kps[:, WRIST_L] += radius * circle
    kps[:, WRIST_R] += radius * np.stack([np.cos(theta + np.pi), np.sin(theta + np.pi)], axis=1)
    kps[:, ELBOW_L] += 0.5 * radius * circle
    kps[:, ELBOW_R] += 0.5 * radius * np.stack([np.cos(theta + np.pi),
                                                np.sin(theta + np.pi)], axis=1)
    # small posture jitter so no point is perfectly static
    kps += rng.normal(0.0, 0.4, size=kps.shape)
    kps[..., 0] = np.clip(kps[..., 0], 0, FRAME_W - 1)
    kps[..., 1] = np.clip(kps[..., 1], 0, FRAME_H - 1)

    return SyntheticClip(
        spec=spec,
        waveform=Waveform(samples=samples, rate=SAMPLE_RATE),
        keypoints_px=kps,
        audio_envelope=env25,
    )


def audio_envelope_25hz(w: Waveform, n_frames: int) -> np.ndarray:
    """Per-video-frame RMS amplitude of the waveform."""
    x = np.asarray(w.samples)
    need = n_frames * SAMPLES_PER_FRAME
    if x.size < need:
        x = np.pad(x, (0, need - x.size))
    blocks = x[:need].reshape(n_frames, SAMPLES_PER_FRAME)
    return np.sqrt((blocks ** 2).mean(axis=1))


def mean_keypoint_speed(kps: np.ndarray) -> np.ndarray:
    """Mean per-frame keypoint displacement magnitude, length T - 1."""
    d = np.diff(np.asarray(kps, dtype=float), axis=0)
    return np.linalg.norm(d, axis=2).mean(axis=1)


def oracle_best_offset(kps_px: np.ndarray, waveform: Waveform, offsets) -> int:
    """Model-free sync estimate: argmax over candidate lags of the normalized
    cross-correlation between the 25 Hz audio envelope and mean keypoint
    speed.  Fully independent of the neural pipeline."""
    n_frames = kps_px.shape[0]
    speed = mean_keypoint_speed(kps_px)
    if speed.std() < 1e-9:
        raise SyntheticError("keypoints are static: cross-correlation undefined")
    env = audio_envelope_25hz(waveform, n_frames)
    best, best_corr = None, -np.inf
    for o in offsets:
        i = np.arange(max(0, -o), min(len(speed), n_frames - o))
        if i.size < 10:
            continue
        a, b = speed[i], env[i + o]
        if a.std() < 1e-9 or b.std() < 1e-9:
            continue
        corr = float(np.corrcoef(a, b)[0, 1])
        if corr > best_corr:
            best, best_corr = int(o), corr
    if best is None:
        raise SyntheticError("no candidate lag had enough overlap to correlate")
    return best


def generate_dataset(out_dir, n_clips: int, duration_s: float = 10.0,
                     mode: str = "correlated", injected_offset_frames: int = 0,
                     gesture_sparsity: float = 1.0, seed: int = 0,
                     split: str | None = None) -> Path:
    """Write n_clips in the standard manifest/keypoint/audio formats.

    Clips are assigned train/val/test splits 80/10/10 unless ``split`` pins
    them all to one split.  Returns the manifest path.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for i in range(n_clips):
        spec = SyntheticClipSpec(
            seed=seed * 1_000_003 + i,
            duration_s=duration_s,
            mode=mode,
            injected_offset_frames=injected_offset_frames,
            gesture_sparsity=gesture_sparsity,
        )
        clip = generate_clip(spec)
        clip_id = f"{mode}_{i:05d}"
        wav_path = out_dir / f"{clip_id}.wav"
        kp_path = out_dir / f"{clip_id}.kp.txt"
        save_wav(wav_path, clip.waveform)
        write_keypoint_file(kp_path, clip.keypoints_px, FPS)
        if split is None:
            clip_split = "train" if i % 10 < 8 else ("val" if i % 10 == 8 else "test")
        else:
            clip_split = split
        records.append(ClipManifestRecord(
            clip_id=clip_id,
            keypoints_path=str(kp_path),
            audio_path=str(wav_path),
            speaker_id=f"synth_{i:05d}",
            split=clip_split,
            n_frames=clip.keypoints_px.shape[0],
        ))
    manifest_path = out_dir / "manifest.jsonl"
    save_manifest(records, manifest_path)
    return manifest_path
