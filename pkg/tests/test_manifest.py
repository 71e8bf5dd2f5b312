import numpy as np
import pytest

from bodysync.manifest import (ClipManifestRecord, ManifestError, load_manifest,
                               read_keypoint_file, save_manifest, write_keypoint_file)


def make_record(i=0, n_frames=100, split="train"):
    return ClipManifestRecord(
        clip_id=f"clip{i}", keypoints_path=f"kp{i}.txt", audio_path=f"a{i}.wav",
        speaker_id=f"spk{i}", split=split, n_frames=n_frames)


def test_empty_manifest(tmp_path):
    p = tmp_path / "m.jsonl"
    p.write_text("")
    assert load_manifest(p) == []


def test_three_records_round_trip(tmp_path):
    p = tmp_path / "m.jsonl"
    recs = [make_record(i, split=s) for i, s in enumerate(["train", "val", "test"])]
    save_manifest(recs, p)
    loaded = load_manifest(p)
    assert loaded == recs
    assert [r.split for r in loaded] == ["train", "val", "test"]


def test_short_clip_rejected_with_min_frames(tmp_path):
    p = tmp_path / "m.jsonl"
    save_manifest([make_record(n_frames=10)], p)
    with pytest.raises(ManifestError, match="n_frames=10"):
        load_manifest(p, min_frames=25)


def test_malformed_line_reports_line_number(tmp_path):
    p = tmp_path / "m.jsonl"
    p.write_text(make_record().to_json() + "\n{not json\n")
    with pytest.raises(ManifestError, match="line 2"):
        load_manifest(p)


def test_missing_field_named(tmp_path):
    p = tmp_path / "m.jsonl"
    p.write_text('{"clip_id": "a", "split": "train"}\n')
    with pytest.raises(ManifestError, match="keypoints_path"):
        load_manifest(p)


def test_bad_split_rejected(tmp_path):
    p = tmp_path / "m.jsonl"
    save_manifest([make_record(split="train")], p)
    text = p.read_text().replace("train", "dev")
    p.write_text(text)
    with pytest.raises(ManifestError, match="split"):
        load_manifest(p)


def test_keypoint_file_round_trip(tmp_path):
    kps = np.random.default_rng(0).uniform(0, 480, size=(7, 22, 2))
    p = tmp_path / "c.kp.txt"
    write_keypoint_file(p, kps, fps=25)
    loaded, fps = read_keypoint_file(p)
    assert fps == 25
    np.testing.assert_allclose(loaded, kps, atol=1e-5)


def test_keypoint_file_shape_mismatch(tmp_path):
    p = tmp_path / "c.kp.txt"
    p.write_text("2 3 25\n1 2 3 4 5 6\n")   # header says 2 frames, only 1 line
    with pytest.raises(ManifestError):
        read_keypoint_file(p)
