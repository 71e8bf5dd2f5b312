"""Offset-prediction protocols, sync accuracy, and the who-is-speaking
harness.

Per-frame embeddings are computed for every valid window start (stride 1
for video, stride 4 in audio frames).  A candidate offset o is realized by
shifting the speech-embedding index stream: score(o) is the mean over F
centered frame positions of the cosine similarity between the visual
embedding at i and the speech embedding at i + o.  Ties break toward the
smallest absolute offset.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .config import SyncConfig
from .training import LoadedClip
from .audio import slice_audio_window

LIP_AVG_WINDOWS = (5, 7, 9, 11, 13, 15)
GESTURE_AVG_WINDOWS = (25, 50, 75, 100)


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class EvalProtocol:
    name: str
    offsets: tuple[int, ...]
    tolerance_frames: int
    averaging_windows: tuple[int, ...]

    @property
    def max_offset(self) -> int:
        return max(abs(o) for o in self.offsets)

    @property
    def chance_accuracy(self) -> float:
        within = sum(1 for o in self.offsets if abs(o) <= self.tolerance_frames)
        return 100.0 * within / len(self.offsets)


def lip_protocol() -> EvalProtocol:
    # +/-15 frames, 31 candidates, tolerance 1 frame -> chance 3/31 = 9.7%
    return EvalProtocol("lip", tuple(range(-15, 16)), 1, LIP_AVG_WINDOWS)


def gesture_protocol() -> EvalProtocol:
    # +/-50 frames step 5, 21 candidates, tolerance 10 -> chance 5/21 = 23.8%
    return EvalProtocol("gesture", tuple(range(-50, 51, 5)), 10, GESTURE_AVG_WINDOWS)


def get_protocol(name: str) -> EvalProtocol:
    if name == "lip":
        return lip_protocol()
    if name == "gesture":
        return gesture_protocol()
    raise EvaluationError(f"unknown protocol {name!r} (expected 'lip' or 'gesture')")


@dataclass
class ScoreTable:
    offsets: np.ndarray              # (n_offsets,)
    per_offset_per_frame: np.ndarray  # (n_offsets, F)
    averaged: np.ndarray             # (n_offsets,)


@dataclass
class OffsetPrediction:
    predicted_offset: int
    score_margin: float
    correct: bool


def per_frame_embeddings(clip: LoadedClip, model, cfg: SyncConfig,
                         chunk: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """Embeddings for every valid window start of a clip.

    Returns (visual, speech) with equal leading length n_frames - T + 1;
    visual is (P, d) or (P, N_kp, d) depending on representation.
    """
    from .synthetic import FRAME_H, FRAME_W
    from .keypoints import normalize_keypoints

    T = cfg.window_T
    n_frames = clip.keypoints_px.shape[0]
    if n_frames < T:
        raise EvaluationError(f"clip {clip.record.clip_id} has {n_frames} < {T} frames")
    P = n_frames - T + 1
    kps = normalize_keypoints(clip.keypoints_px, FRAME_H, FRAME_W).astype(np.float32)
    windows = np.stack([kps[i: i + T] for i in range(P)])
    mels = np.stack([slice_audio_window(clip.mel, i, T) for i in range(P)]).astype(np.float32)

    model.eval()
    v_out, s_out = [], []
    with torch.no_grad():
        for lo in range(0, P, chunk):
            v_out.append(model.encode_visual(torch.from_numpy(windows[lo: lo + chunk])).numpy())
            s_out.append(model.encode_speech(torch.from_numpy(mels[lo: lo + chunk])).numpy())
    return np.concatenate(v_out), np.concatenate(s_out)


def _unit(x: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(x, axis=-1, keepdims=True)
    if np.any(n == 0):
        raise EvaluationError("cosine similarity undefined for zero-norm embedding")
    return x / n


def frame_scores(visual: np.ndarray, speech: np.ndarray, positions: np.ndarray,
                 offset: int, reduce: str = "max") -> np.ndarray:
    """Cosine scores for pairs (visual[i], speech[i + offset]), i in positions."""
    vi = _unit(visual[positions])
    si = _unit(speech[positions + offset])
    if vi.ndim == 3:   # (F, N_kp, d) vs (F, d)
        sims = np.einsum("fnd,fd->fn", vi, si)
        return sims.max(axis=1) if reduce == "max" else sims.mean(axis=1)
    return np.einsum("fd,fd->f", vi, si)


def score_table(visual: np.ndarray, speech: np.ndarray, protocol: EvalProtocol,
                F: int, reduce: str = "max") -> ScoreTable:
    """Averaged offset scores over one centered F-frame window."""
    P = visual.shape[0]
    m = protocol.max_offset
    needed = F + 2 * m
    if P < needed:
        raise EvaluationError(
            f"need at least {needed} embedding pairs for F={F} with offsets up to "
            f"±{m}, got {P} (clip too short)"
        )
    start = (P - F) // 2
    start = min(max(start, m), P - F - m)
    positions = np.arange(start, start + F)
    table = np.stack([frame_scores(visual, speech, positions, o, reduce)
                      for o in protocol.offsets])
    return ScoreTable(
        offsets=np.array(protocol.offsets),
        per_offset_per_frame=table,
        averaged=table.mean(axis=1),
    )


def predict_offset_from_embeddings(visual: np.ndarray, speech: np.ndarray,
                                   protocol: EvalProtocol, F: int,
                                   reduce: str = "max", true_offset: int = 0
                                   ) -> tuple[OffsetPrediction, ScoreTable]:
    tbl = score_table(visual, speech, protocol, F, reduce)
    # argmax with smallest-|offset| tie break
    order = np.lexsort((np.abs(tbl.offsets), -tbl.averaged))
    best = order[0]
    rest = np.delete(tbl.averaged, best)
    margin = float(tbl.averaged[best] - rest.max()) if rest.size else float("inf")
    pred = int(tbl.offsets[best])
    correct = abs(pred - true_offset) <= protocol.tolerance_frames
    return OffsetPrediction(pred, margin, correct), tbl


def predict_offset(clip: LoadedClip, model, cfg: SyncConfig, protocol: EvalProtocol,
                   F: int, true_offset: int = 0):
    reduce = "max" if cfg.representation == "kp_vector" else "mean"
    visual, speech = per_frame_embeddings(clip, model, cfg)
    return predict_offset_from_embeddings(visual, speech, protocol, F,
                                          reduce=reduce, true_offset=true_offset)


def sync_accuracy(clips: list[LoadedClip], model, cfg: SyncConfig,
                  protocol: EvalProtocol, F: int) -> tuple[float, list[dict]]:
    """Percentage of clips whose predicted offset is within tolerance of 0."""
    if not clips:
        raise EvaluationError("empty evaluation manifest")
    results = []
    n_correct = 0
    for clip in clips:
        pred, _ = predict_offset(clip, model, cfg, protocol, F)
        n_correct += pred.correct
        results.append({
            "clip_id": clip.record.clip_id,
            "protocol": protocol.name,
            "F": F,
            "predicted_offset": pred.predicted_offset,
            "correct": bool(pred.correct),
        })
    return 100.0 * n_correct / len(clips), results


def who_is_speaking(target_visual: np.ndarray, candidate_speech: list[np.ndarray],
                    reduce: str = "max") -> int:
    """Index of the candidate speech stream most similar to the target's
    visual stream (mean per-frame cosine)."""
    P = target_visual.shape[0]
    for k, s in enumerate(candidate_speech):
        if s.shape[0] != P:
            raise EvaluationError(
                f"candidate {k} has {s.shape[0]} speech embeddings, target has {P}"
            )
    positions = np.arange(P)
    means = [frame_scores(target_visual, s, positions, 0, reduce).mean()
             for s in candidate_speech]
    return int(np.argmax(means))


def who_is_speaking_accuracy(clips: list[LoadedClip], model, cfg: SyncConfig,
                             n_negatives: int, rng: np.random.Generator,
                             n_trials: int | None = None) -> float:
    """Speaker-identification accuracy over trials built from a manifest.

    Each trial pairs one target clip's visual stream with its own speech
    stream plus ``n_negatives`` other clips' speech streams (truncated to a
    common length), and counts whether argmax similarity picks the target.
    """
    if len(clips) < n_negatives + 1:
        raise EvaluationError(
            f"need at least {n_negatives + 1} clips for {n_negatives}-negative trials"
        )
    reduce = "max" if cfg.representation == "kp_vector" else "mean"
    embs = [per_frame_embeddings(c, model, cfg) for c in clips]
    P = min(v.shape[0] for v, _ in embs)
    n_trials = len(clips) if n_trials is None else n_trials
    n_correct = 0
    for t in range(n_trials):
        target = t % len(clips)
        others = [i for i in range(len(clips)) if i != target]
        negs = rng.choice(others, size=n_negatives, replace=False)
        candidates = [embs[target][1][:P]] + [embs[i][1][:P] for i in negs]
        chosen = who_is_speaking(embs[target][0][:P], candidates, reduce)
        n_correct += chosen == 0
    return 100.0 * n_correct / n_trials


def export_attention(model, visual_window: np.ndarray) -> np.ndarray:
    """Keypoint-attention weights of a factorised model for one window.

    Returns (n_layers, n_heads, T, N_kp, N_kp); each row is a probability
    distribution over keypoints.
    """
    if model.cfg.representation != "kp_vector":
        raise EvaluationError(
            "attention export requires a keypoint-vector (factorised) model"
        )
    x = torch.from_numpy(np.asarray(visual_window, dtype=np.float32)).unsqueeze(0)
    model.eval()
    with torch.no_grad():
        _, attn = model.encode_visual(x, collect_attention=True)
    # per layer: (1, T, heads, N, N) -> (heads, T, N, N)
    layers = [a[0].permute(1, 0, 2, 3).numpy() for a in attn]
    return np.stack(layers)


def save_attention(path, attn: np.ndarray) -> None:
    """Portable multi-dimensional array file (npy with a documented layout:
    layers x heads x T x N_kp x N_kp)."""
    np.save(path, attn)
