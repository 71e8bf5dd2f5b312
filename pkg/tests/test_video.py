import numpy as np
import pytest

from bodysync.video import MASK_FILL, VideoError, mask_face, render_skeleton


def checker(T=2, H=32, W=48):
    yy, xx = np.mgrid[0:H, 0:W]
    pattern = ((yy + xx) % 2).astype(float)
    return np.broadcast_to(pattern, (T, 3, H, W)).copy()


def test_full_frame_box_gives_constant_image():
    frames = checker()
    boxes = np.tile([0, 0, 48, 32], (2, 1)).astype(float)
    out = mask_face(frames, boxes)
    np.testing.assert_allclose(out, MASK_FILL)


def test_zero_area_box_errors():
    frames = checker()
    boxes = np.tile([10, 10, 10, 20], (2, 1)).astype(float)
    with pytest.raises(VideoError, match="degenerate"):
        mask_face(frames, boxes)


def test_mask_locality():
    frames = checker(T=1, H=32, W=48)
    boxes = np.array([[0.0, 0.0, 20.0, 32.0]])
    out = mask_face(frames, boxes)
    # 10% margin on a 20-wide box: columns >= 22 untouched
    np.testing.assert_array_equal(out[:, :, :, 23:], frames[:, :, :, 23:])
    assert np.all(out[:, :, :, :20] == MASK_FILL)


def test_missing_box_errors():
    with pytest.raises(VideoError, match="one box per frame"):
        mask_face(checker(T=3), np.zeros((2, 4)))


def test_box_outside_frame_errors():
    with pytest.raises(VideoError, match="outside"):
        mask_face(checker(), np.tile([0, 0, 100, 100], (2, 1)).astype(float))


def test_horizontal_stroke_bounding_box():
    H, W = 64, 128
    kps = np.array([[[0.25, 0.5], [0.75, 0.5]]])
    out = render_skeleton(kps, H, W, edges=[(0, 1)])
    lit_cols = np.where(out[0].sum(axis=(0, 1)) > 0)[0]
    # lit pixels span roughly 0.25*W .. 0.75*W (joint discs add a few px)
    assert abs(lit_cols.min() - 0.25 * W) <= 4
    assert abs(lit_cols.max() - 0.75 * W) <= 4
    lit_rows = np.where(out[0].sum(axis=(0, 2)) > 0)[0]
    assert np.all(np.abs(lit_rows - 0.5 * H) <= 4)


def test_coincident_points_single_disc():
    kps = np.full((1, 5, 2), 0.5)
    out = render_skeleton(kps, 64, 64, edges=[(0, 1), (2, 3)])
    lit = np.argwhere(out[0].sum(axis=0) > 0)
    center = np.array([32, 32])
    assert lit.size > 0
    assert np.all(np.linalg.norm(lit - center, axis=1) <= 5)


def test_render_background_zero_and_deterministic():
    rng = np.random.default_rng(0)
    kps = rng.uniform(0.1, 0.9, size=(3, 22, 2))
    a = render_skeleton(kps, 68, 120)
    b = render_skeleton(kps, 68, 120)
    assert a.tobytes() == b.tobytes()
    assert a.min() == 0.0 and a.max() <= 1.0
    assert (a == 0).mean() > 0.5   # background dominates and is exactly 0


def test_render_rejects_nan_and_unnormalized():
    kps = np.full((1, 2, 2), 0.5)
    kps[0, 0, 0] = np.nan
    with pytest.raises(VideoError):
        render_skeleton(kps, 32, 32)
    with pytest.raises(VideoError):
        render_skeleton(np.full((1, 2, 2), 1.5), 32, 32)
