import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scenechar.augment import (
    AugmentationConfig,
    ProjectiveTransform,
    apply_blend,
    apply_border_shadow,
    apply_noise_and_blur,
    blend_background,
    canvas_corners,
    dilate,
    draw_border_shadow,
    gaussian_blur,
    homography_from_points,
    is_convex_quad,
    random_homography,
    shadow_color,
    shift,
    warp,
)
from scenechar.errors import ConfigError, DegenerateQuad, PatchTooSmall, SingularTransform
from scenechar.glyph import BaseCharImage, composite, to_uint8


def square_glyph(fg=(20, 20, 20), bg=(230, 230, 230)):
    cov = np.zeros((32, 32), np.float32)
    cov[10:22, 12:20] = 1.0
    pixels = to_uint8(composite(np.full((32, 32, 3), bg, np.float64), fg, cov))
    return BaseCharImage(pixels, 0, "test", fg, bg, cov)


def smooth_image(seed=0, size=48):
    rng = np.random.default_rng(seed)
    return to_uint8(gaussian_blur(rng.integers(0, 256, (size, size, 3)), 2.0))


# ---- border and shadow

def test_zero_probabilities_leave_glyph_unchanged():
    img = square_glyph()
    cfg = AugmentationConfig(border_prob=0.0, shadow_prob=0.0)
    rng = np.random.default_rng(0)
    for _ in range(20):
        border, shadow = draw_border_shadow(rng, cfg)
        assert border == 0 and shadow is None
        assert np.array_equal(apply_border_shadow(img, border, shadow).pixels, img.pixels)


def test_certain_border_changes_pixels():
    img = square_glyph()
    border, _ = draw_border_shadow(np.random.default_rng(1), AugmentationConfig(border_prob=1.0, shadow_prob=0.0))
    assert 1 <= border <= 3
    out = apply_border_shadow(img, border, None)
    changed = np.any(out.pixels != img.pixels, axis=2)
    assert changed.any()
    # only a ring around the glyph changes; the glyph interior keeps the fg color
    assert not changed[10:22, 12:20].any()
    assert not changed[:10 - border].any()


def test_shadow_oracle():
    img = square_glyph()
    out = apply_border_shadow(img, 0, (2, 2)).pixels
    dark = shadow_color(img.fg)
    expected = np.array(img.pixels)
    rows, cols = np.nonzero(img.coverage)
    shadow = np.zeros_like(img.coverage, dtype=bool)
    shadow[rows + 2, cols + 2] = True
    shadow &= img.coverage == 0
    expected[shadow] = dark
    assert np.array_equal(out, expected)


def test_shift_and_dilate():
    m = np.zeros((5, 5))
    m[2, 2] = 1
    assert shift(m, 1, -1)[1, 3] == 1 and shift(m, 1, -1).sum() == 1
    assert shift(m, 5, 0).sum() == 0
    d = dilate(m, 1)
    assert d.sum() == 5 and d[1, 2] == d[2, 1] == d[2, 3] == d[3, 2] == 1


# ---- homographies

def test_zero_jitter_gives_identity():
    t = random_homography(np.random.default_rng(0), (48, 48), 0.0)
    assert np.array_equal(t.h, np.eye(3))


def test_uniform_corner_shift_is_translation():
    src = canvas_corners((40, 40))
    t = homography_from_points(src, src + [2.5, -1.0])
    np.testing.assert_allclose(t.h, [[1, 0, 2.5], [0, 1, -1.0], [0, 0, 1]], atol=1e-9)


def test_known_perspective_map():
    # hand-built homography; recover it from its own corner images
    h = np.array([[1.1, 0.05, 2.0], [-0.03, 0.95, 1.0], [0.002, -0.001, 1.0]])
    src = canvas_corners((48, 48))
    homo = np.c_[src, np.ones(4)] @ h.T
    dst = homo[:, :2] / homo[:, 2:]
    np.testing.assert_allclose(homography_from_points(src, dst).h, h, atol=1e-9)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), jitter=st.floats(0.01, 0.3))
def test_random_homography_hits_its_corners(seed, jitter):
    rng = np.random.default_rng(seed)
    t = random_homography(rng, (48, 48), jitter)
    mapped = t.apply(canvas_corners((48, 48)))
    assert is_convex_quad(mapped)
    assert np.abs(mapped - canvas_corners((48, 48))).max() <= jitter * 48 + 1e-6
    back = t.inverse().apply(mapped)
    np.testing.assert_allclose(back, canvas_corners((48, 48)), atol=1e-6)


def test_singular_and_degenerate():
    with pytest.raises(SingularTransform):
        ProjectiveTransform(np.zeros((3, 3)))
    with pytest.raises(SingularTransform):
        ProjectiveTransform(np.array([[1, 2, 0], [2, 4, 0], [0, 0, 1.0]]))
    with pytest.raises(DegenerateQuad):
        homography_from_points(np.zeros((4, 2)), np.zeros((4, 2)))
    with pytest.raises(ConfigError):
        random_homography(np.random.default_rng(0), (48, 48), 0.5)


# ---- warp

def test_identity_warp_is_bit_exact():
    img = np.random.default_rng(0).integers(0, 256, (48, 48, 3), dtype=np.uint8)
    assert np.array_equal(warp(img, ProjectiveTransform.identity()), img)
    gray = img[..., 0]
    assert np.array_equal(warp(gray, ProjectiveTransform.identity()), gray)


@pytest.mark.parametrize("dx,dy", [(3, 0), (0, -2), (-4, 5)])
def test_translation_matches_index_shift(dx, dy):
    img = np.random.default_rng(1).integers(0, 256, (40, 40, 3), dtype=np.uint8)
    out = warp(img, ProjectiveTransform.translation(dx, dy), fill=0)
    h, w = img.shape[:2]
    for y in range(h):
        for x in range(w):
            sy, sx = y - dy, x - dx
            if 0 <= sy < h and 0 <= sx < w:
                assert np.array_equal(out[y, x], img[sy, sx])
            else:
                assert not out[y, x].any()


def test_round_trip_warp_mae():
    rng = np.random.default_rng(2)
    img = smooth_image(3)
    interior = np.zeros((48, 48), bool)
    interior[6:-6, 6:-6] = True
    errors = []
    for _ in range(100):
        t = random_homography(rng, (48, 48), 0.1)
        back = warp(warp(img, t), t.inverse())
        # pixels whose forward image stays inside the canvas survive the trip
        pts = t.apply(np.argwhere(interior)[:, ::-1])
        keep = np.all((pts >= 1) & (pts <= 46), axis=1)
        ys, xs = np.argwhere(interior)[keep].T
        errors.append(np.abs(back[ys, xs].astype(int) - img[ys, xs].astype(int)).mean())
    assert max(errors) < 3


def test_fill_value_outside():
    img = np.full((10, 10), 50, np.uint8)
    out = warp(img, ProjectiveTransform.translation(20, 0), fill=200)
    assert (out == 200).all()


# ---- blend

def test_blend_endpoints_and_midpoint():
    img = np.full((8, 8, 3), 100, np.uint8)
    patch = np.full((12, 12, 3), 200, np.uint8)
    assert np.array_equal(apply_blend(img, patch, 0.0, (0, 0)), img)
    assert (apply_blend(img, patch, 1.0, (2, 3)) == 200).all()
    assert (apply_blend(img, patch, 0.5, (4, 4)) == 150).all()


def test_blend_uses_offset_window():
    img = np.zeros((2, 2), np.uint8)
    patch = np.arange(16, dtype=np.uint8).reshape(4, 4)
    out = apply_blend(img, patch, 1.0, (1, 2))
    assert out.tolist() == [[6, 7], [10, 11]]


def test_blend_gray_patch_on_rgb():
    img = np.zeros((4, 4, 3), np.uint8)
    out = apply_blend(img, np.full((4, 4), 90, np.uint8), 1.0, (0, 0))
    assert (out == 90).all()


def test_patch_too_small():
    with pytest.raises(PatchTooSmall):
        blend_background(np.zeros((48, 48, 3), np.uint8), np.zeros((30, 60, 3), np.uint8), 0.2, np.random.default_rng(0))
    with pytest.raises(ConfigError):
        blend_background(np.zeros((4, 4, 3), np.uint8), np.zeros((8, 8, 3), np.uint8), 1.5, np.random.default_rng(0))


# ---- blur and noise

def test_zero_blur_zero_noise_is_noop():
    img = smooth_image(4)
    assert np.array_equal(apply_noise_and_blur(img, 0.0, 0.0, np.random.default_rng(0)), img)


@pytest.mark.parametrize("sigma", [0.5, 1.0, 2.0])
def test_uniform_image_is_fixed_point(sigma):
    img = np.full((20, 20, 3), 137, np.uint8)
    assert np.array_equal(apply_noise_and_blur(img, sigma, 0.0, np.random.default_rng(0)), img)


@pytest.mark.parametrize("sigma", [1.0, 1.5, 2.0])
def test_impulse_response_matches_gaussian(sigma):
    img = np.zeros((31, 31), np.uint8)
    img[15, 15] = 255
    out = apply_noise_and_blur(img, sigma, 0.0, np.random.default_rng(0)).astype(float)
    yy, xx = np.mgrid[-15:16, -15:16]
    analytic = 255 * np.exp(-(xx ** 2 + yy ** 2) / (2 * sigma ** 2)) / (2 * math.pi * sigma ** 2)
    assert np.abs(out - analytic).max() <= 1.0


@pytest.mark.parametrize("sigma", [0.5, 1.0, 1.5])
def test_blur_preserves_mean(sigma):
    img = np.random.default_rng(5).integers(0, 256, (48, 48, 3)).astype(np.uint8)
    out = gaussian_blur(img, sigma)
    assert abs(out.mean() - img.mean()) < 0.5


def test_noise_statistics():
    img = np.full((100, 100), 128, np.uint8)
    out = apply_noise_and_blur(img, 0.0, 0.05, np.random.default_rng(0)).astype(float)
    assert abs(out.mean() - 128) < 0.5
    assert out.std() == pytest.approx(0.05 * 255, rel=0.05)


# ---- config

def test_config_validation_and_round_trip():
    cfg = AugmentationConfig(corner_jitter=0.2, blur_sigma_range=(0.5, 1.0))
    assert AugmentationConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ConfigError):
        AugmentationConfig(border_prob=1.5)
    with pytest.raises(ConfigError):
        AugmentationConfig(blur_sigma_range=(2.0, 1.0))
    with pytest.raises(ConfigError):
        AugmentationConfig(corner_jitter=0.5)
    with pytest.raises(ConfigError):
        AugmentationConfig.from_dict({"warp": 1})
