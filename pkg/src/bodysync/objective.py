"""Similarity, contrastive loss, and the gap-constrained negative sampler.

The loss pushes the in-sync audio window's similarity above K distractor
windows drawn from the same clip, each at least one second away from the
positive.  Training logits default to raw dot products; cosine logits are
available via ``logit_mode`` (evaluation always uses cosine).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .config import SyncConfig


class SamplingError(ValueError):
    pass


@dataclass(frozen=True)
class NegativeSamplingPolicy:
    K: int
    min_gap_frames: int = 25

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be >= 1")


def _pairwise(ev: torch.Tensor, es: torch.Tensor, mode: str) -> torch.Tensor:
    """Per-row similarity between matching rows of ev and es (..., d)."""
    if mode == "cosine":
        nv = ev.norm(dim=-1)
        ns = es.norm(dim=-1)
        if (nv == 0).any() or (ns == 0).any():
            raise ValueError("cosine similarity undefined for zero-norm embedding")
        return (ev * es).sum(dim=-1) / (nv * ns)
    return (ev * es).sum(dim=-1)


def similarity(ev: torch.Tensor, es: torch.Tensor, reduce: str = "mean",
               mode: str = "cosine") -> torch.Tensor:
    """Similarity between visual and speech embeddings.

    Image mode: ev (d,) or (B, d) against es of the same shape -> scalar / (B,).
    Vector mode: ev (N_kp, d) or (B, N_kp, d) against es (d,) / (B, d);
    per-keypoint similarities are reduced over the keypoint axis by ``reduce``.
    """
    if ev.dim() == es.dim() + 1:               # vector mode: extra keypoint axis
        sims = _pairwise(ev, es.unsqueeze(-2), mode)    # (..., N_kp)
        if reduce == "max":
            return sims.max(dim=-1).values
        if reduce == "mean":
            return sims.mean(dim=-1)
        raise ValueError(f"unknown reduce mode {reduce!r}")
    return _pairwise(ev, es, mode)


def loss_from_logits(l_pos: torch.Tensor, l_negs: torch.Tensor) -> torch.Tensor:
    """Stable -log softmax(positive) given logits; l_negs has a trailing K axis."""
    if not torch.isfinite(l_pos).all() or not torch.isfinite(l_negs).all():
        raise ValueError("non-finite logit in contrastive loss")
    all_logits = torch.cat([l_pos.unsqueeze(-1), l_negs], dim=-1)
    return torch.logsumexp(all_logits, dim=-1) - l_pos


def contrastive_loss(ev: torch.Tensor, es_pos: torch.Tensor, es_negs: torch.Tensor,
                     cfg: SyncConfig, reduce: str | None = None) -> torch.Tensor:
    """Contrastive sync loss for one batch.

    ev: (B, d) or (B, N_kp, d); es_pos: (B, d); es_negs: (B, K, d).
    Returns the mean loss over the batch; always >= 0 and exactly
    ln(K + 1) when all logits are equal.
    """
    reduce = cfg.similarity_reduce if reduce is None else reduce
    l_pos = similarity(ev, es_pos, reduce, cfg.logit_mode) / cfg.temperature
    if ev.dim() == 3:
        sims = similarity(ev.unsqueeze(1), es_negs, reduce, cfg.logit_mode)
    else:
        sims = _pairwise(ev.unsqueeze(1), es_negs, cfg.logit_mode)
    l_negs = sims / cfg.temperature
    return loss_from_logits(l_pos, l_negs).mean()


def valid_negative_starts(clip_len_frames: int, positive_start: int, window_T: int,
                          min_gap_frames: int) -> np.ndarray:
    """All window starts whose nearest edge is >= min_gap_frames from the
    positive window's nearest edge, with the window fully inside the clip."""
    p = positive_start
    starts = np.arange(0, clip_len_frames - window_T + 1)
    left_ok = starts + window_T + min_gap_frames <= p
    right_ok = starts >= p + window_T + min_gap_frames
    return starts[left_ok | right_ok]


def sample_negatives(clip_len_frames: int, positive_start: int, window_T: int,
                     policy: NegativeSamplingPolicy, rng: np.random.Generator) -> np.ndarray:
    """Draw K negative window starts uniformly without replacement.

    Raises SamplingError naming the deficit when fewer than K valid starts
    exist rather than silently reusing windows.
    """
    if positive_start < 0 or positive_start + window_T > clip_len_frames:
        raise SamplingError(
            f"positive window [{positive_start}, {positive_start + window_T}) does not fit "
            f"in a {clip_len_frames}-frame clip"
        )
    valid = valid_negative_starts(clip_len_frames, positive_start, window_T,
                                  policy.min_gap_frames)
    if valid.size < policy.K:
        raise SamplingError(
            f"need {policy.K} negative windows but only {valid.size} valid starts exist "
            f"(clip_len={clip_len_frames}, positive_start={positive_start}, "
            f"window_T={window_T}, min_gap={policy.min_gap_frames})"
        )
    return np.sort(rng.choice(valid, size=policy.K, replace=False))
