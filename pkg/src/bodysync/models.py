"""Dual encoders: visual (images or keypoint vectors) and speech.

Visual path: conv backbone -> per-frame features -> Transformer (temporal
for image inputs, factorised time/keypoint attention for vector inputs)
-> mean over time + linear head.  Speech path: 2-D conv stack over the
mel-spectrogram with cumulative temporal stride 4 so internal features have
one step per video frame, then pooling and a linear head.

Image-input embeddings are d-vectors; keypoint-vector embeddings are
(N_kp, d) with the linear head shared across keypoints so checkpoints stay
portable across keypoint sets.
"""
from __future__ import annotations

import math

import torch
import torch.nn as nn

from .config import SyncConfig, validate_config


def sinusoidal_positions(length: int, dim: int) -> torch.Tensor:
    """Standard sinusoidal positional encoding, shape (length, dim)."""
    pos = torch.arange(length, dtype=torch.float64).unsqueeze(1)
    div = torch.exp(torch.arange(0, dim, 2, dtype=torch.float64) * (-math.log(10000.0) / dim))
    pe = torch.zeros(length, dim, dtype=torch.float64)
    pe[:, 0::2] = torch.sin(pos * div)
    pe[:, 1::2] = torch.cos(pos * div[: (dim + 1) // 2])
    return pe.float()


class ImageEncoder(nn.Module):
    """3-D conv backbone for RGB or skeleton-image input.

    First layer has temporal extent 5 with symmetric temporal padding, so the
    time axis is preserved end to end; spatial dims are progressively
    downsampled and mean-pooled away.
    """

    def __init__(self, d: int):
        super().__init__()
        widths = [max(8, d // 8), max(16, d // 4), max(16, d // 2), d, d]
        # replicate padding keeps time-translation invariance exact at the edges
        layers = [nn.Conv3d(3, widths[0], (5, 7, 7), stride=(1, 2, 2), padding=(2, 3, 3),
                            padding_mode="replicate"),
                  nn.ReLU()]
        for cin, cout in zip(widths[:-1], widths[1:]):
            layers += [nn.Conv3d(cin, cout, (3, 3, 3), stride=(1, 2, 2), padding=(1, 1, 1),
                                 padding_mode="replicate"),
                       nn.ReLU()]
        self.net = nn.Sequential(*layers)
        self.d = d

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        # x: (B, 3, T, H, W) in [0, 1] -> (B, T, d)
        if x.shape[2] < 5:
            raise ValueError(f"image encoder needs T >= 5 frames, got T={x.shape[2]}")
        h = self.net(x)                 # (B, d, T, H', W')
        h = h.mean(dim=(3, 4))          # (B, d, T)
        return h.transpose(1, 2)


class KeypointVectorEncoder(nn.Module):
    """2-D conv over the (time, keypoint) grid with (x, y) as two channels.

    Every kernel has keypoint extent 1, so per-keypoint identity is kept
    intact until the Transformer mixes keypoints via attention.

    Coordinates are centered per keypoint over the window and rescaled:
    displacements are small fractions of the frame, and without this the
    static pose dominates every window's features.
    """

    KP_GAIN = 10.0

    def __init__(self, d: int):
        super().__init__()
        widths = [max(4, d // 16), max(8, d // 8), max(16, d // 4), d]
        self.net = nn.Sequential(
            nn.Conv2d(2, widths[0], (5, 1), padding=(2, 0), padding_mode="replicate"), nn.ReLU(),
            nn.Conv2d(widths[0], widths[1], (3, 1), padding=(1, 0), padding_mode="replicate"), nn.ReLU(),
            nn.Conv2d(widths[1], widths[2], (3, 1), padding=(1, 0), padding_mode="replicate"), nn.ReLU(),
            nn.Conv2d(widths[2], d, (1, 1)),
        )
        self.d = d

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        # x: (B, 2, T, N_kp) -> (B, T, N_kp, d)
        x = (x - x.mean(dim=2, keepdim=True)) * self.KP_GAIN
        h = self.net(x)                 # (B, d, T, N)
        return h.permute(0, 2, 3, 1)


class TemporalTransformer(nn.Module):
    """Pre-norm Transformer encoder over the time axis with sinusoidal
    positional encodings."""

    def __init__(self, d: int, n_layers: int, n_heads: int, max_T: int):
        super().__init__()
        layer = nn.TransformerEncoderLayer(
            d_model=d, nhead=n_heads, dim_feedforward=4 * d, dropout=0.0,
            batch_first=True, norm_first=True,
        )
        self.layers = nn.TransformerEncoder(layer, num_layers=n_layers,
                                            enable_nested_tensor=False)
        self.register_buffer("pos", sinusoidal_positions(max_T, d), persistent=False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        # x: (B, T, d) -> (B, T, d)
        T = x.shape[1]
        return self.layers(x + self.pos[:T])


class _FeedForward(nn.Module):
    def __init__(self, d: int):
        super().__init__()
        self.norm = nn.LayerNorm(d)
        self.net = nn.Sequential(nn.Linear(d, 4 * d), nn.ReLU(), nn.Linear(4 * d, d))

    def forward(self, x):
        return x + self.net(self.norm(x))


class FactorizedLayer(nn.Module):
    """One factorised block: attention across time, then across keypoints,
    then a pointwise feed-forward, all pre-norm residual."""

    def __init__(self, d: int, n_heads: int):
        super().__init__()
        self.time_norm = nn.LayerNorm(d)
        self.time_attn = nn.MultiheadAttention(d, n_heads, batch_first=True)
        self.kp_norm = nn.LayerNorm(d)
        self.kp_attn = nn.MultiheadAttention(d, n_heads, batch_first=True)
        self.ff = _FeedForward(d)

    def forward(self, x: torch.Tensor, collect_attention: bool = False):
        # x: (B, T, N, d)
        B, T, N, d = x.shape
        h = x.transpose(1, 2).reshape(B * N, T, d)
        hn = self.time_norm(h)
        a, _ = self.time_attn(hn, hn, hn, need_weights=False)
        h = (h + a).reshape(B, N, T, d).transpose(1, 2)   # back to (B, T, N, d)

        g = h.reshape(B * T, N, d)
        gn = self.kp_norm(g)
        kp_weights = None
        if collect_attention:
            a, kp_weights = self.kp_attn(gn, gn, gn, need_weights=True,
                                         average_attn_weights=False)
            kp_weights = kp_weights.reshape(B, T, -1, N, N)  # (B, T, heads, N, N)
        else:
            a, _ = self.kp_attn(gn, gn, gn, need_weights=False)
        g = (g + a).reshape(B, T, N, d)
        return self.ff(g), kp_weights


class FactorizedTransformer(nn.Module):
    """Stack of factorised layers with learnable time and keypoint
    positional embeddings."""

    def __init__(self, d: int, n_layers: int, n_heads: int, max_T: int, n_kp: int):
        super().__init__()
        self.time_pos = nn.Parameter(0.02 * torch.randn(max_T, d))
        self.kp_pos = nn.Parameter(0.02 * torch.randn(n_kp, d))
        self.blocks = nn.ModuleList(FactorizedLayer(d, n_heads) for _ in range(n_layers))

    def forward(self, x: torch.Tensor, collect_attention: bool = False):
        # x: (B, T, N, d) -> (B, T, N, d) [, attention per layer]
        B, T, N, d = x.shape
        if N != self.kp_pos.shape[0]:
            raise ValueError(
                f"keypoint axis {N} does not match positional table {self.kp_pos.shape[0]}"
            )
        h = x + self.time_pos[:T].unsqueeze(1) + self.kp_pos.unsqueeze(0)
        attn = []
        for block in self.blocks:
            h, w = block(h, collect_attention=collect_attention)
            if collect_attention:
                attn.append(w)
        return (h, attn) if collect_attention else h


# log-mel features sit mostly near the silence floor log(1e-10); a fixed
# affine rescale keeps the conv stack's inputs near unit scale while
# preserving absolute loudness differences between windows
MEL_SHIFT = -15.0
MEL_SCALE = 8.0


class SpeechEncoder(nn.Module):
    """2-D conv stack over (T', 80) mel frames with cumulative temporal
    stride 4, pooled to a single d-vector."""

    def __init__(self, d: int):
        super().__init__()
        widths = [max(8, d // 8), max(16, d // 4), max(32, d // 2), d]
        self.net = nn.Sequential(
            nn.Conv2d(1, widths[0], 3, stride=(2, 2), padding=1), nn.ReLU(),
            nn.Conv2d(widths[0], widths[1], 3, stride=(2, 2), padding=1), nn.ReLU(),
            nn.Conv2d(widths[1], widths[2], 3, stride=(1, 2), padding=1), nn.ReLU(),
            nn.Conv2d(widths[2], widths[3], 3, stride=(1, 2), padding=1), nn.ReLU(),
        )
        self.head = nn.Linear(widths[3], d)
        self.d = d

    def conv_features(self, mel: torch.Tensor) -> torch.Tensor:
        # mel: (B, T', 80) -> (B, d, T'/4) after mean over frequency
        x = (mel - MEL_SHIFT) / MEL_SCALE
        h = self.net(x.unsqueeze(1))    # (B, d, T'/4, 5)
        return h.mean(dim=3)

    def forward(self, mel: torch.Tensor) -> torch.Tensor:
        # mel: (B, T', 80) -> (B, d)
        return self.head(self.conv_features(mel).mean(dim=2))


class SyncModel(nn.Module):
    """The full dual-encoder model for one representation mode."""

    def __init__(self, cfg: SyncConfig):
        super().__init__()
        validate_config(cfg)
        self.cfg = cfg
        d = cfg.embed_dim
        if cfg.representation in ("rgb", "kp_image"):
            self.visual_conv = ImageEncoder(d)
            self.transformer = TemporalTransformer(d, cfg.n_layers, cfg.n_heads, cfg.window_T)
        else:
            self.visual_conv = KeypointVectorEncoder(d)
            self.transformer = FactorizedTransformer(
                d, cfg.n_layers, cfg.n_heads, cfg.window_T, cfg.keypoint_set.count
            )
        # batch norm before each head: without it the contrastive objective
        # has a stable collapse attractor (every embedding identical, loss
        # pinned at ln(K+1)) that small-data training falls into
        self.visual_norm = nn.BatchNorm1d(d)
        self.visual_head = nn.Linear(d, d)   # shared across keypoints in vector mode
        self.speech_norm = nn.BatchNorm1d(d)
        self.speech_encoder = SpeechEncoder(d)

    def visual_features(self, x: torch.Tensor) -> torch.Tensor:
        if self.cfg.representation == "kp_vector":
            # x: (B, T, N, 2) -> conv over (T, N) grid
            return self.visual_conv(x.permute(0, 3, 1, 2))
        return self.visual_conv(x)

    def encode_visual(self, x: torch.Tensor, collect_attention: bool = False):
        """x: (B, 3, T, H, W) for image modes, (B, T, N, 2) for kp_vector.

        Returns (B, d) for image modes, (B, N_kp, d) for kp_vector.
        """
        feats = self.visual_features(x)
        attn = None
        if self.cfg.representation == "kp_vector":
            if collect_attention:
                ctx, attn = self.transformer(feats, collect_attention=True)
            else:
                ctx = self.transformer(feats)
        else:
            ctx = self.transformer(feats)
        pooled = ctx.mean(dim=1)
        if pooled.dim() == 3:    # (B, N, d): normalize features over batch x keypoints
            B, N, d = pooled.shape
            pooled = self.visual_norm(pooled.reshape(B * N, d)).reshape(B, N, d)
        else:
            pooled = self.visual_norm(pooled)
        emb = self.visual_head(pooled)
        return (emb, attn) if collect_attention else emb

    def encode_speech(self, mel: torch.Tensor) -> torch.Tensor:
        """mel: (B, 4*window_T, 80) -> (B, d)."""
        if mel.shape[1] != 4 * self.cfg.window_T:
            raise ValueError(
                f"speech segment must have {4 * self.cfg.window_T} frames, got {mel.shape[1]}"
            )
        pooled = self.speech_encoder.conv_features(mel).mean(dim=2)
        return self.speech_encoder.head(self.speech_norm(pooled))

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())


def build_model(cfg: SyncConfig, seed: int | None = None) -> SyncModel:
    """Construct a SyncModel with deterministic parameter init."""
    torch.manual_seed(cfg.seed if seed is None else seed)
    return SyncModel(cfg)
