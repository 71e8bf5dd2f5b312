import numpy as np
import pytest

from bodysync.audio import load_wav
from bodysync.manifest import load_manifest, read_keypoint_file
from bodysync.synthetic import (BASE_POSE_22, SyntheticClipSpec, SyntheticError,
                                audio_envelope_25hz, generate_clip,
                                generate_dataset, mean_keypoint_speed,
                                oracle_best_offset)


def xcorr_peak_lag(clip, lags=range(-50, 51)):
    env = audio_envelope_25hz(clip.waveform, clip.keypoints_px.shape[0])
    speed = mean_keypoint_speed(clip.keypoints_px)
    best, best_c = None, -2.0
    for o in lags:
        i = np.arange(max(0, -o), min(len(speed), len(env) - o))
        a, b = speed[i], env[i + o]
        if a.std() > 1e-9 and b.std() > 1e-9:
            c = np.corrcoef(a, b)[0, 1]
            if c > best_c:
                best, best_c = o, c
    return best, best_c


def test_spec_validation():
    with pytest.raises(SyntheticError):
        SyntheticClipSpec(seed=0, injected_offset_frames=60)
    with pytest.raises(SyntheticError):
        SyntheticClipSpec(seed=0, duration_s=2.0)
    with pytest.raises(SyntheticError):
        SyntheticClipSpec(seed=0, mode="chaotic")


def test_correlated_peak_at_zero_lag():
    clip = generate_clip(SyntheticClipSpec(seed=5, duration_s=10))
    lag, corr = xcorr_peak_lag(clip)
    assert abs(lag) <= 1
    assert corr > 0.8


def test_uncorrelated_below_correlated_peak():
    # over 20 seeds, the max cross-correlation of any uncorrelated clip stays
    # below the weakest correlated peak
    corr_peaks = [xcorr_peak_lag(generate_clip(SyntheticClipSpec(seed=s, duration_s=10)))[1]
                  for s in range(20)]
    unc_peaks = [xcorr_peak_lag(generate_clip(
        SyntheticClipSpec(seed=s, duration_s=10, mode="uncorrelated")))[1]
        for s in range(20)]
    assert max(unc_peaks) < min(corr_peaks)


def test_same_seed_bit_identical():
    spec = SyntheticClipSpec(seed=11, duration_s=5, gesture_sparsity=0.6)
    a, b = generate_clip(spec), generate_clip(spec)
    assert a.waveform.samples.tobytes() == b.waveform.samples.tobytes()
    assert a.keypoints_px.tobytes() == b.keypoints_px.tobytes()


def test_shapes_and_audio_duration():
    clip = generate_clip(SyntheticClipSpec(seed=0, duration_s=8))
    assert clip.keypoints_px.shape == (200, 22, 2)
    assert clip.waveform.samples.size == 200 * 640   # exactly n_frames / fps seconds


def test_oracle_recovers_injected_offsets():
    for D in (20, 0, -15):
        clip = generate_clip(SyntheticClipSpec(seed=3, duration_s=10,
                                               injected_offset_frames=D))
        got = oracle_best_offset(clip.keypoints_px, clip.waveform, range(-50, 51))
        assert abs(got - D) <= 5


def test_oracle_sparsity_gate():
    # generator self-consistency: >= 95% recovery at sparsity 0.5
    hits = 0
    n = 40
    for s in range(n):
        clip = generate_clip(SyntheticClipSpec(seed=s, duration_s=10,
                                               gesture_sparsity=0.5,
                                               injected_offset_frames=10))
        got = oracle_best_offset(clip.keypoints_px, clip.waveform, range(-50, 51))
        hits += abs(got - 10) <= 5
    assert hits / n >= 0.95


def test_oracle_static_keypoints_error():
    clip = generate_clip(SyntheticClipSpec(seed=0, duration_s=4))
    static = np.tile(BASE_POSE_22, (100, 1, 1))
    with pytest.raises(SyntheticError, match="static"):
        oracle_best_offset(static, clip.waveform, range(-50, 51))


def test_generate_dataset_round_trips(tmp_path):
    manifest = generate_dataset(tmp_path, 5, duration_s=4, seed=1)
    records = load_manifest(manifest)
    assert len(records) == 5
    assert {r.split for r in records} <= {"train", "val", "test"}
    kps, fps = read_keypoint_file(records[0].keypoints_path)
    assert fps == 25
    assert kps.shape == (100, 22, 2)
    w = load_wav(records[0].audio_path)
    assert w.samples.size == 100 * 640
    assert records[0].n_frames == 100
