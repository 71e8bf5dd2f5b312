"""Self-supervised gesture-speech synchronisation.

Dual encoders map video (RGB frames, skeleton images, or keypoint vectors)
and speech (log-mel spectrograms) into a shared embedding space trained
with a contrastive offset objective, evaluated on offset prediction and
speaker identification.
"""
from .config import SyncConfig, KeypointSetId, keypoint_set, validate_config, ConfigError

__all__ = ["SyncConfig", "KeypointSetId", "keypoint_set", "validate_config", "ConfigError"]
__version__ = "0.1.0"
