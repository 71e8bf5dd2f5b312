"""Self-supervised training: windows and negatives from each clip, Adam,
val-loss early stopping, and the mean->max similarity curriculum for
keypoint-vector models."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .audio import Waveform, compute_mel_spectrogram, load_wav, slice_audio_window, MelSpectrogram
from .checkpoint import Checkpoint, checkpoint_from_model
from .config import SyncConfig, validate_config
from .keypoints import augment_keypoints, index_table, normalize_keypoints, select_keypoints
from .manifest import ClipManifestRecord, read_keypoint_file
from .models import build_model
from .objective import (NegativeSamplingPolicy, SamplingError, contrastive_loss,
                        sample_negatives, valid_negative_starts)
from .synthetic import FRAME_H, FRAME_W


@dataclass
class TrainState:
    epoch: int = 0
    step: int = 0
    curriculum_phase: str = "mean"
    best_val_loss: float = math.inf
    best_epoch: int = 0
    epochs_since_improvement: int = 0
    curriculum_fired: bool = False


@dataclass
class LoadedClip:
    record: ClipManifestRecord
    keypoints_px: np.ndarray   # (n_frames, N_kp, 2), already selected
    mel: MelSpectrogram


_MEL_CACHE: dict[str, MelSpectrogram] = {}


def load_clip(record: ClipManifestRecord, cfg: SyncConfig) -> LoadedClip:
    """Read keypoints and audio for one clip; mel spectrograms are cached.

    Keypoint files carrying exactly the configured set's count are treated
    as pre-selected; larger raw files go through index selection.
    """
    kps_px, _ = read_keypoint_file(record.keypoints_path)
    set_id = cfg.keypoint_set
    if kps_px.shape[1] != set_id.count:
        kps_px = select_keypoints(kps_px, set_id)
    mel = _MEL_CACHE.get(record.audio_path)
    if mel is None:
        mel = compute_mel_spectrogram(load_wav(record.audio_path))
        mel = MelSpectrogram(frames=mel.frames.astype(np.float32))
        _MEL_CACHE[record.audio_path] = mel
    return LoadedClip(record=record, keypoints_px=kps_px, mel=mel)


def feasible_positive_starts(clip_len: int, cfg: SyncConfig) -> np.ndarray:
    """Positive window starts that admit at least K gap-respecting negatives."""
    key = (clip_len, cfg.window_T, cfg.min_gap_frames, cfg.K)
    cached = _FEASIBLE_CACHE.get(key)
    if cached is None:
        starts = []
        for p in range(clip_len - cfg.window_T + 1):
            n_valid = valid_negative_starts(clip_len, p, cfg.window_T, cfg.min_gap_frames).size
            if n_valid >= cfg.K:
                starts.append(p)
        cached = _FEASIBLE_CACHE[key] = np.array(starts, dtype=int)
    return cached


_FEASIBLE_CACHE: dict[tuple, np.ndarray] = {}


def make_training_example(clip: LoadedClip, rng: np.random.Generator, cfg: SyncConfig,
                          augment: bool = False):
    """One (visual window, positive mel, K negative mels) example.

    The positive start is sampled uniformly over feasible starts; negatives
    come from the gap-constrained sampler.  Raises SamplingError for clips
    too short to yield any feasible positive.
    """
    clip_len = clip.keypoints_px.shape[0]
    feasible = feasible_positive_starts(clip_len, cfg)
    if feasible.size == 0:
        raise SamplingError(
            f"clip {clip.record.clip_id}: {clip_len} frames admit no positive window "
            f"with {cfg.K} negatives (window_T={cfg.window_T}, gap={cfg.min_gap_frames})"
        )
    p = int(rng.choice(feasible))
    policy = NegativeSamplingPolicy(cfg.K, cfg.min_gap_frames)
    neg_starts = sample_negatives(clip_len, p, cfg.window_T, policy, rng)
    kps_win = clip.keypoints_px[p: p + cfg.window_T]
    if augment:
        kps_win = augment_keypoints(kps_win, rng)
    visual = normalize_keypoints(kps_win, FRAME_H, FRAME_W).astype(np.float32)
    pos = slice_audio_window(clip.mel, p, cfg.window_T)
    negs = np.stack([slice_audio_window(clip.mel, int(s), cfg.window_T) for s in neg_starts])
    return visual, pos, negs


class EarlyStopper:
    """Strict-improvement early stopping with an absolute tolerance."""

    def __init__(self, patience: int, tol: float = 1e-4):
        self.patience = patience
        self.tol = tol
        self.best = math.inf
        self.best_epoch = 0
        self.bad_epochs = 0

    def update(self, epoch: int, val_loss: float) -> bool:
        improved = val_loss < self.best - self.tol
        if improved:
            self.best = val_loss
            self.best_epoch = epoch
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
        return improved

    @property
    def should_stop(self) -> bool:
        return self.bad_epochs >= self.patience

    def reset(self):
        self.best = math.inf
        self.best_epoch = 0
        self.bad_epochs = 0


def curriculum_trigger(state: TrainState, improved: bool, cap_epochs: int) -> bool:
    """True exactly once: first failed improvement in the mean phase, or the
    epoch cap, whichever comes first."""
    if state.curriculum_fired or state.curriculum_phase != "mean":
        return False
    return (not improved) or state.epoch >= cap_epochs


class _JsonlLog:
    def __init__(self, path):
        self.f = open(path, "w", encoding="utf-8") if path else None

    def write(self, **fields):
        if self.f:
            self.f.write(json.dumps(fields, sort_keys=True) + "\n")
            self.f.flush()

    def close(self):
        if self.f:
            self.f.close()


def _batch_loss(model, batch, cfg, reduce):
    visuals = torch.from_numpy(np.stack([b[0] for b in batch]))
    pos = torch.from_numpy(np.stack([b[1] for b in batch]).astype(np.float32))
    negs = torch.from_numpy(np.stack([b[2] for b in batch]).astype(np.float32))
    B, K = negs.shape[0], negs.shape[1]
    ev = model.encode_visual(visuals)
    es_pos = model.encode_speech(pos)
    es_negs = model.encode_speech(negs.reshape(B * K, *negs.shape[2:])).reshape(B, K, -1)
    return contrastive_loss(ev, es_pos, es_negs, cfg, reduce=reduce)


def train(cfg: SyncConfig, train_records: list[ClipManifestRecord],
          val_records: list[ClipManifestRecord], log_path=None,
          augment: bool = False, quiet: bool = True) -> Checkpoint:
    """Train to convergence; returns the best-validation checkpoint.

    Keypoint-vector models start in the mean similarity phase and switch to
    max at the first mean-phase validation plateau or the configured epoch
    cap.  Training stops when validation loss has not improved for
    ``patience`` epochs, and aborts (returning the last good checkpoint) if
    the loss goes non-finite.
    """
    validate_config(cfg)
    if not train_records or not val_records:
        raise ValueError("train and val manifests must both be non-empty")
    if cfg.representation != "kp_vector":
        raise NotImplementedError(
            "training is implemented for the kp_vector representation; image "
            "representations are supported for encoding and evaluation only"
        )
    torch.manual_seed(cfg.seed)
    model = build_model(cfg)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    log = _JsonlLog(log_path)

    train_clips = [load_clip(r, cfg) for r in train_records]
    val_clips = [load_clip(r, cfg) for r in val_records]
    # fixed validation examples so epoch-to-epoch losses are comparable
    val_rng = np.random.default_rng(cfg.seed + 987_654_321)
    val_examples = [make_training_example(c, val_rng, cfg) for c in val_clips]

    state = TrainState()
    stopper = EarlyStopper(cfg.patience, cfg.improvement_tol)
    curriculum = cfg.representation == "kp_vector"
    state.curriculum_phase = "mean" if curriculum else cfg.similarity_reduce
    best_ckpt = checkpoint_from_model(model, state.curriculum_phase, math.inf, 0)

    for epoch in range(1, cfg.max_epochs + 1):
        state.epoch = epoch
        rng = np.random.default_rng(cfg.seed * 1_000_003 + epoch)
        order = rng.permutation(len(train_clips))
        model.train()
        for lo in range(0, len(order), cfg.batch_size):
            batch = [make_training_example(train_clips[i], rng, cfg, augment=augment)
                     for i in order[lo: lo + cfg.batch_size]]
            loss = _batch_loss(model, batch, cfg, state.curriculum_phase)
            if not torch.isfinite(loss):
                log.write(event="abort", epoch=epoch, step=state.step, reason="non-finite loss")
                log.close()
                return best_ckpt
            opt.zero_grad()
            loss.backward()
            opt.step()
            state.step += 1
            log.write(step=state.step, epoch=epoch, loss=float(loss.detach()),
                      phase=state.curriculum_phase, lr=cfg.lr)

        model.eval()
        with torch.no_grad():
            val_losses = []
            for lo in range(0, len(val_examples), cfg.batch_size):
                vb = val_examples[lo: lo + cfg.batch_size]
                val_losses.append(float(_batch_loss(model, vb, cfg, state.curriculum_phase)))
            val_loss = float(np.mean(val_losses))
        improved = stopper.update(epoch, val_loss)
        if improved:
            state.best_val_loss = val_loss
            state.best_epoch = epoch
            best_ckpt = checkpoint_from_model(model, state.curriculum_phase, val_loss, epoch)
        state.epochs_since_improvement = stopper.bad_epochs
        log.write(event="epoch", epoch=epoch, val_loss=val_loss, phase=state.curriculum_phase)
        if not quiet:
            print(f"epoch {epoch}: val_loss={val_loss:.4f} phase={state.curriculum_phase}")

        if curriculum and curriculum_trigger(state, improved, cfg.curriculum_cap_epochs):
            state.curriculum_phase = "max"
            state.curriculum_fired = True
            stopper.reset()   # max-phase losses are not comparable to mean-phase ones
            best_ckpt = checkpoint_from_model(model, "max", math.inf, epoch)
            log.write(event="curriculum_switch", epoch=epoch, phase="max")
            continue
        if stopper.should_stop:
            break

    log.close()
    return best_ckpt
