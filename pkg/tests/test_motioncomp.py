import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dsgm_masker.dsgm import init_models
from dsgm_masker.motioncomp import (
    DegenerateConfigurationError,
    FlowMatch,
    InsufficientMatchesError,
    MotionParams,
    SingularHomographyError,
    detect_corners,
    estimate_motion,
    homography_dlt,
    lk_flow,
    project,
    ransac_homography,
    warp_frame,
    warp_models,
)
from dsgm_masker.synthetic import textured_image

CORNERS_64 = np.array([[0, 0], [63, 0], [0, 63], [63, 63]], dtype=float)


def shifted_pair(dx, dy, h=100, w=140, seed=1):
    """Crops of one texture so that ``next`` is ``prev`` moved by (dx, dy)."""
    big = textured_image(h + 40, w + 40, seed=seed)
    prev = big[20 : 20 + h, 20 : 20 + w]
    nxt = big[20 - dy : 20 - dy + h, 20 - dx : 20 - dx + w]
    return prev, nxt


def random_homography(rng, size=64.0, jitter=6.0):
    """Well-conditioned homography defined by perturbing the image corners."""
    src = np.array([[0, 0], [size, 0], [0, size], [size, size]])
    dst = src + rng.uniform(-jitter, jitter, src.shape)
    return homography_dlt(src, dst)


def matches_from(src, dst, status=True):
    return [FlowMatch(tuple(s), tuple(d), status, 0.0) for s, d in zip(src, dst)]


# -- corners ------------------------------------------------------------------

def test_constant_frame_has_no_corners():
    assert detect_corners(np.full((32, 32), 90.0)).shape == (0, 2)


def test_white_square_yields_its_four_corners():
    frame = np.zeros((40, 40))
    frame[10:30, 12:28] = 255
    pts = detect_corners(frame, max_corners=10, quality=0.1, min_dist=4)
    assert len(pts) == 4
    expected = np.array([[12, 10], [27, 10], [12, 29], [27, 29]], dtype=float)
    for e in expected:
        assert np.min(np.hypot(*(pts - e).T)) <= 1.5


def test_checkerboard_respects_min_dist():
    yy, xx = np.mgrid[0:32, 0:32]
    board = 255.0 * (((yy // 4) + (xx // 4)) % 2)
    pts = detect_corners(board, max_corners=500, min_dist=8)
    assert len(pts) > 1
    d = np.hypot(*(pts[:, None, :] - pts[None, :, :]).transpose(2, 0, 1))
    assert d[np.triu_indices(len(pts), 1)].min() >= 8


def test_corner_count_is_capped():
    pts = detect_corners(textured_image(64, 64, seed=3), max_corners=15)
    assert len(pts) == 15


def test_tiny_frame_rejected():
    with pytest.raises(ValueError):
        detect_corners(np.zeros((7, 30)))


# -- Lucas-Kanade -------------------------------------------------------------

def test_identity_motion_tracks_in_place():
    img = textured_image(80, 80, seed=5)
    pts = detect_corners(img, 50)
    for m in lk_flow(img, img, pts, window=21, levels=3):
        assert m.status
        assert abs(m.dst[0] - m.src[0]) < 0.01 and abs(m.dst[1] - m.src[1]) < 0.01


@pytest.mark.parametrize("levels", [1, 3, 5])
def test_horizontal_shift_recovered(levels):
    prev, nxt = shifted_pair(3, 0)
    matches = lk_flow(prev, nxt, detect_corners(prev, 100), window=21, levels=levels)
    tracked = [m for m in matches if m.status]
    assert len(tracked) >= 0.9 * len(matches)
    for m in tracked:
        assert abs(m.dst[0] - m.src[0] - 3) < 0.5 and abs(m.dst[1] - m.src[1]) < 0.5


def test_point_in_flat_region_is_lost():
    img = np.full((60, 60), 40.0)
    img[:, 40:] = np.linspace(0, 200, 20)
    (m,) = lk_flow(img, img, [[10.0, 30.0]], window=9, levels=1)
    assert not m.status


def test_point_leaving_frame_is_lost():
    prev, nxt = shifted_pair(6, 0, h=60, w=60)
    (m,) = lk_flow(prev, nxt, [[57.0, 30.0]], window=9, levels=2)
    assert not m.status


def test_lk_rejects_shape_mismatch():
    with pytest.raises(ValueError):
        lk_flow(np.zeros((20, 20)), np.zeros((20, 21)), [[5, 5]])


@pytest.mark.parametrize("window", [4, 3])
def test_lk_rejects_bad_window(window):
    with pytest.raises(ValueError):
        lk_flow(np.zeros((20, 20)), np.zeros((20, 20)), [[5, 5]], window=window)


# -- DLT ----------------------------------------------------------------------

def test_dlt_identity():
    pts = np.array([[0, 0], [10, 0], [0, 10], [10, 10]], dtype=float)
    assert np.allclose(homography_dlt(pts, pts), np.eye(3), atol=1e-9)


def test_dlt_translation():
    pts = np.array([[0, 0], [10, 0], [0, 10], [10, 10], [3, 7]], dtype=float)
    H = homography_dlt(pts, pts + [5, -2])
    assert np.allclose(H, [[1, 0, 5], [0, 1, -2], [0, 0, 1]], atol=1e-6)


def test_dlt_recovers_random_homography(rng):
    H = random_homography(rng)
    src = rng.uniform(0, 64, (12, 2))
    H_hat = homography_dlt(src, project(H, src))
    assert np.allclose(H_hat, H, atol=1e-6)
    assert H_hat[2, 2] == pytest.approx(1.0)


def test_dlt_collinear_points_are_degenerate():
    src = np.array([[0, 0], [1, 1], [2, 2], [3, 3]], dtype=float)
    with pytest.raises(DegenerateConfigurationError):
        homography_dlt(src, src + 1)


def test_dlt_needs_four_points():
    with pytest.raises(InsufficientMatchesError):
        homography_dlt(np.zeros((3, 2)), np.zeros((3, 2)))


# -- RANSAC -------------------------------------------------------------------

def test_ransac_exact_matches_all_inliers(rng):
    H = random_homography(rng)
    src = rng.uniform(0, 64, (50, 2))
    H_hat, inl = ransac_homography(matches_from(src, project(H, src)))
    assert inl.all()
    assert np.allclose(project(H_hat, CORNERS_64), project(H, CORNERS_64), atol=1e-6)


def test_ransac_rejects_outliers(rng):
    H = random_homography(rng)
    src = rng.uniform(0, 64, (50, 2))
    dst = project(H, src)
    dst[40:] += rng.uniform(20, 40, (10, 2))
    H_hat, inl = ransac_homography(matches_from(src, dst))
    assert inl[:40].all() and not inl[40:].any()
    assert np.abs(project(H_hat, CORNERS_64) - project(H, CORNERS_64)).max() < 1e-3


def test_ransac_is_deterministic_for_a_seed(rng):
    src = rng.uniform(0, 64, (30, 2))
    dst = src + rng.normal(0, 1.0, src.shape)
    a = ransac_homography(matches_from(src, dst), seed=7)
    b = ransac_homography(matches_from(src, dst), seed=7)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_ransac_ignores_lost_matches(rng):
    src = rng.uniform(0, 64, (10, 2))
    good = matches_from(src, src + 2)
    lost = matches_from(src, src + 30, status=False)
    _, inl = ransac_homography(good + lost)
    assert inl[:10].all() and not inl[10:].any()


def test_ransac_needs_four_tracked():
    src = np.arange(6, dtype=float).reshape(3, 2)
    with pytest.raises(InsufficientMatchesError):
        ransac_homography(matches_from(src, src))


# -- warping ------------------------------------------------------------------

def test_identity_warp_is_exact(rng):
    f = rng.uniform(0, 255, (20, 30))
    assert np.array_equal(warp_frame(f, np.eye(3)), f)


def test_translation_warp_moves_content():
    ramp = np.tile(np.arange(16, dtype=float) * 10, (8, 1))
    out = warp_frame(ramp, np.array([[1.0, 0, 1], [0, 1, 0], [0, 0, 1]]))
    assert np.array_equal(out[:, 1:], ramp[:, :-1])
    assert np.array_equal(out[:, 0], ramp[:, 0])


def test_warp_round_trip_close_in_interior(rng):
    yy, xx = np.mgrid[0:64, 0:64]
    f = 127.5 + 100 * np.sin(xx / 9.0) * np.cos(yy / 11.0)
    H = random_homography(rng, jitter=3.0)
    back = warp_frame(warp_frame(f, H), np.linalg.inv(H))
    assert np.abs(back - f)[10:-10, 10:-10].max() <= 2


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_warp_preserves_range(seed):
    rng = np.random.default_rng(seed)
    f = rng.uniform(0, 255, (16, 16))
    out = warp_frame(f, random_homography(rng, size=16.0, jitter=2.0))
    assert out.min() >= f.min() - 1e-9 and out.max() <= f.max() + 1e-9


def test_singular_homography_rejected():
    with pytest.raises(SingularHomographyError):
        warp_frame(np.zeros((5, 5)), np.zeros((3, 3)))


def test_warp_models_identity_is_noop(rng):
    m = init_models(rng.uniform(0, 255, (12, 12)))
    m.age_a[:] = rng.integers(1, 31, m.age_a.shape)
    assert warp_models(m, np.eye(3)).identical_to(m)


def test_warp_models_resets_exposed_strip():
    m = init_models(np.full((10, 30), 80.0))
    m.var_a[:] = 3.0
    m.age_a[:] = 12
    out = warp_models(m, np.array([[1.0, 0, 10], [0, 1, 0], [0, 0, 1]]), var_init=255)
    assert (out.var_a[:, :10] == 255).all() and (out.age_a[:, :10] == 1).all()
    assert (out.var_a[:, 10:] == 3).all() and (out.age_a[:, 10:] == 12).all()


def test_warp_models_shifts_means_and_keeps_ages_valid(rng):
    frame = np.tile(np.arange(20, dtype=float) * 5, (6, 1))
    m = init_models(frame)
    m.age_a[:] = rng.integers(1, 31, m.age_a.shape)
    out = warp_models(m, np.array([[1.0, 0, 1], [0, 1, 0], [0, 0, 1]]))
    assert np.abs(out.mean_a[:, 1:] - frame[:, :-1]).max() <= 1
    assert out.age_a.min() >= 1 and out.age_a.max() <= 30


# -- end to end ---------------------------------------------------------------

def test_tracked_corners_recover_camera_translation():
    prev, nxt = shifted_pair(2, -1)
    H = estimate_motion(prev, nxt, MotionParams(levels=3))
    truth = np.array([[1.0, 0, 2], [0, 1, -1], [0, 0, 1]])
    corners = np.array([[0, 0], [139, 0], [0, 99], [139, 99]], dtype=float)
    assert np.abs(project(H, corners) - project(truth, corners)).max() < 1.0


def test_estimate_motion_gives_up_on_flat_frames():
    flat = np.full((40, 40), 10.0)
    assert estimate_motion(flat, flat) is None
