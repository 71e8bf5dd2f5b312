"""Configuration records shared by every stage of the pipeline.

All hyperparameters live in a single validated ``SyncConfig`` so that a
checkpoint fully describes the model that produced it.
"""
from __future__ import annotations

from dataclasses import dataclass, field, asdict, replace

REPRESENTATIONS = ("rgb", "kp_image", "kp_vector")
REDUCE_MODES = ("mean", "max")
LOGIT_MODES = ("dot", "cosine")

# name -> keypoint count; index tables live in keypoints.py
KEYPOINT_SET_COUNTS = {
    "pose22": 22,
    "pose_hands64": 64,
    "pose_upper_head43": 43,
    "pose_head58": 58,
    "dense48": 48,
    "dense70": 70,
    "dense142": 142,
    "face128": 128,
}


class ConfigError(ValueError):
    """Raised when a config violates one or more invariants."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class KeypointSetId:
    name: str
    count: int

    def __post_init__(self):
        expected = KEYPOINT_SET_COUNTS.get(self.name)
        if expected is None:
            raise ConfigError([f"keypoint_set: unknown set name {self.name!r}"])
        if self.count != expected:
            raise ConfigError(
                [f"keypoint_set: {self.name} has {expected} keypoints, got count={self.count}"]
            )


def keypoint_set(name: str) -> KeypointSetId:
    if name not in KEYPOINT_SET_COUNTS:
        raise ConfigError([f"keypoint_set: unknown set name {name!r}"])
    return KeypointSetId(name, KEYPOINT_SET_COUNTS[name])


@dataclass(frozen=True)
class SyncConfig:
    """Every architecture / training / protocol hyperparameter in one record.

    The audio window is four times the video window: speech frames are hopped
    every 10 ms while video runs at 25 fps (40 ms per frame).
    """

    fps: int = 25
    sample_rate: int = 16000
    window_T: int = 25          # visual frames per segment (5 for the lip protocol)
    window_Tp: int = 100        # audio frames per segment, always 4 * window_T
    embed_dim: int = 512
    n_layers: int = 6
    n_heads: int = 8
    representation: str = "kp_vector"
    keypoint_set: KeypointSetId = field(default_factory=lambda: keypoint_set("pose22"))
    K: int = 4                  # negatives per positive
    min_gap_frames: int = 25    # negatives at least this far from the positive window
    lr: float = 1e-4
    patience: int = 5
    similarity_reduce: str = "mean"
    logit_mode: str = "dot"
    temperature: float = 1.0
    seed: int = 0
    # training knobs the reference protocol leaves open
    batch_size: int = 16
    max_epochs: int = 50
    curriculum_cap_epochs: int = 10  # hard cap on the mean phase (kp_vector only)
    improvement_tol: float = 1e-4    # absolute val-loss improvement threshold

    def errors(self) -> list[str]:
        errs = []
        if self.fps <= 0:
            errs.append("fps: must be > 0")
        if self.sample_rate <= 0:
            errs.append("sample_rate: must be > 0")
        if self.window_T < 1:
            errs.append("window_T: must be >= 1")
        if self.window_Tp != 4 * self.window_T:
            errs.append("window_Tp: window_Tp must equal 4×window_T")
        if self.embed_dim < 1:
            errs.append("embed_dim: must be >= 1")
        if self.n_layers < 1:
            errs.append("n_layers: must be >= 1")
        if self.n_heads < 1 or self.embed_dim % self.n_heads != 0:
            errs.append("n_heads: embed_dim must be divisible by n_heads")
        if self.representation not in REPRESENTATIONS:
            errs.append(f"representation: must be one of {REPRESENTATIONS}")
        if self.K < 1:
            errs.append("K: must be >= 1")
        if self.min_gap_frames < self.fps:
            errs.append("min_gap_frames: min gap below 1 second (must be >= fps)")
        if self.lr <= 0:
            errs.append("lr: must be > 0")
        if self.patience < 1:
            errs.append("patience: must be >= 1")
        if self.similarity_reduce not in REDUCE_MODES:
            errs.append(f"similarity_reduce: must be one of {REDUCE_MODES}")
        if self.logit_mode not in LOGIT_MODES:
            errs.append(f"logit_mode: must be one of {LOGIT_MODES}")
        if self.temperature <= 0:
            errs.append("temperature: must be > 0")
        if self.batch_size < 1:
            errs.append("batch_size: must be >= 1")
        return errs

    def to_dict(self) -> dict:
        d = asdict(self)
        d["keypoint_set"] = self.keypoint_set.name
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SyncConfig":
        d = dict(d)
        ks = d.get("keypoint_set")
        if isinstance(ks, str):
            d["keypoint_set"] = keypoint_set(ks)
        elif isinstance(ks, dict):
            d["keypoint_set"] = KeypointSetId(**ks)
        unknown = set(d) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ConfigError([f"unknown config field: {k}" for k in sorted(unknown)])
        return cls(**d)

    def with_(self, **kw) -> "SyncConfig":
        return replace(self, **kw)


def validate_config(cfg: SyncConfig) -> SyncConfig:
    """Return ``cfg`` unchanged if every invariant holds, else raise ConfigError
    carrying the complete list of violations."""
    errs = cfg.errors()
    if errs:
        raise ConfigError(errs)
    return cfg
