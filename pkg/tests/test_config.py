import pytest
from hypothesis import given, settings, strategies as st

from bodysync.config import (ConfigError, KeypointSetId, SyncConfig, keypoint_set,
                             validate_config, KEYPOINT_SET_COUNTS)


def test_default_config_is_valid():
    cfg = SyncConfig()
    assert validate_config(cfg) is cfg


def test_window_ratio_violation():
    cfg = SyncConfig(window_T=25, window_Tp=80)
    with pytest.raises(ConfigError) as exc:
        validate_config(cfg)
    assert any("window_Tp" in e and "4×window_T" in e for e in exc.value.errors)


def test_min_gap_below_one_second():
    cfg = SyncConfig(min_gap_frames=10, fps=25)
    with pytest.raises(ConfigError) as exc:
        validate_config(cfg)
    assert any("min_gap_frames" in e and "1 second" in e for e in exc.value.errors)


def test_error_list_is_complete():
    cfg = SyncConfig(fps=-1, K=0, temperature=0.0, window_Tp=7)
    with pytest.raises(ConfigError) as exc:
        validate_config(cfg)
    joined = " ".join(exc.value.errors)
    for name in ("fps", "K", "temperature", "window_Tp"):
        assert name in joined


def test_lip_window_config_valid():
    cfg = SyncConfig(window_T=5, window_Tp=20, keypoint_set=keypoint_set("face128"))
    validate_config(cfg)


@pytest.mark.parametrize("name,count", sorted(KEYPOINT_SET_COUNTS.items()))
def test_keypoint_set_counts(name, count):
    assert keypoint_set(name).count == count


def test_keypoint_set_count_mismatch_rejected():
    with pytest.raises(ConfigError):
        KeypointSetId("pose22", 23)
    with pytest.raises(ConfigError):
        keypoint_set("pose9000")


@settings(max_examples=30, deadline=None)
@given(T=st.integers(1, 60), d=st.sampled_from([16, 64, 512]),
       K=st.integers(1, 8), seed=st.integers(0, 10))
def test_validation_is_idempotent(T, d, K, seed):
    cfg = SyncConfig(window_T=T, window_Tp=4 * T, embed_dim=d, n_heads=4, K=K, seed=seed)
    assert validate_config(validate_config(cfg)) == cfg


def test_dict_round_trip():
    cfg = SyncConfig(embed_dim=64, keypoint_set=keypoint_set("dense142"))
    assert SyncConfig.from_dict(cfg.to_dict()) == cfg


def test_from_dict_rejects_unknown_fields():
    with pytest.raises(ConfigError):
        SyncConfig.from_dict({"embed_dimension": 64})
