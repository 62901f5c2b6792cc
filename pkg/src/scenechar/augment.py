"""Scene-character augmentation: border/shadow, projective warp, blending, blur, noise."""
from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, DegenerateQuad, PatchTooSmall, SingularTransform
from .glyph import BaseCharImage, ColorPalette, color_distance, composite, to_uint8

BORDER_WIDTHS = (1, 3)
SHADOW_OFFSETS = (1, 3)
SHADOW_DARKEN = 0.5
# candidate outline colors; the one farthest from both fg and bg wins
_OUTLINE_COLORS = ColorPalette.lattice().colors


@dataclass(frozen=True)
class AugmentationConfig:
    border_prob: float = 0.25
    shadow_prob: float = 0.25
    corner_jitter: float = 0.15
    blend_alpha_range: tuple[float, float] = (0.10, 0.35)
    noise_sigma_range: tuple[float, float] = (0.0, 0.08)
    blur_sigma_range: tuple[float, float] = (0.0, 1.5)
    background_dir: Path | None = None

    def __post_init__(self):
        for name in ("blend_alpha_range", "noise_sigma_range", "blur_sigma_range"):
            value = tuple(float(x) for x in getattr(self, name))
            if len(value) != 2 or value[0] > value[1]:
                raise ConfigError(f"{name} must be an ordered [lo, hi] pair, got {value}")
            object.__setattr__(self, name, value)
        for name in ("border_prob", "shadow_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if not 0.0 <= self.corner_jitter < 0.5:
            raise ConfigError("corner_jitter must lie in [0, 0.5)")
        lo, hi = self.blend_alpha_range
        if lo < 0 or hi > 1:
            raise ConfigError("blend_alpha_range must lie within [0, 1]")
        if self.noise_sigma_range[0] < 0 or self.blur_sigma_range[0] < 0:
            raise ConfigError("sigma ranges must be non-negative")
        if self.background_dir is not None:
            object.__setattr__(self, "background_dir", Path(self.background_dir))

    @classmethod
    def from_dict(cls, data: dict, base_dir: Path | None = None) -> "AugmentationConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown augmentation keys: {sorted(unknown)}")
        cfg = cls(**data)
        if cfg.background_dir is not None and base_dir is not None and not cfg.background_dir.is_absolute():
            cfg = replace(cfg, background_dir=base_dir / cfg.background_dir)
        return cfg

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        for key, value in out.items():
            if isinstance(value, tuple):
                out[key] = list(value)
        if self.background_dir is not None:
            out["background_dir"] = str(self.background_dir)
        return out


# ---------------------------------------------------------------- border / shadow

def draw_border_shadow(rng: np.random.Generator, cfg: AugmentationConfig):
    """Sample ``(border_width, shadow_offset)``; 0 / None mean "not applied".

    Always consumes the same five draws so later pipeline stages see the same
    stream whatever the probabilities are.
    """
    u_border = rng.random()
    width = int(rng.integers(BORDER_WIDTHS[0], BORDER_WIDTHS[1] + 1))
    u_shadow = rng.random()
    dx = int(rng.integers(SHADOW_OFFSETS[0], SHADOW_OFFSETS[1] + 1))
    dy = int(rng.integers(SHADOW_OFFSETS[0], SHADOW_OFFSETS[1] + 1))
    border = width if u_border < cfg.border_prob else 0
    shadow = (dx, dy) if u_shadow < cfg.shadow_prob else None
    return border, shadow


def shift(mask: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """Translate a 2-D array by (dx, dy) pixels, zero-filling vacated cells."""
    out = np.zeros_like(mask)
    h, w = mask.shape
    if abs(dx) >= w or abs(dy) >= h:
        return out
    out[max(dy, 0):h + min(dy, 0), max(dx, 0):w + min(dx, 0)] = \
        mask[max(-dy, 0):h - max(dy, 0), max(-dx, 0):w - max(dx, 0)]
    return out


def dilate(mask: np.ndarray, radius: int) -> np.ndarray:
    """Grey dilation with a disk of the given radius."""
    out = mask.copy()
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            if (dx or dy) and dx * dx + dy * dy <= radius * radius:
                np.maximum(out, shift(mask, dx, dy), out=out)
    return out


def outline_color(fg, bg):
    return max(_OUTLINE_COLORS, key=lambda c: (min(color_distance(c, fg), color_distance(c, bg)), c))


def shadow_color(fg):
    return tuple(int(round(c * SHADOW_DARKEN)) for c in fg)


def apply_border_shadow(img: BaseCharImage, border: int, shadow) -> BaseCharImage:
    if not border and shadow is None:
        return replace(img, pixels=img.pixels.copy())
    h, w = img.coverage.shape
    canvas = np.empty((h, w, 3), dtype=np.float64)
    canvas[...] = img.bg
    if shadow is not None:
        canvas = composite(canvas, shadow_color(img.fg), shift(img.coverage, *shadow))
    if border:
        canvas = composite(canvas, outline_color(img.fg, img.bg), dilate(img.coverage, border))
    canvas = composite(canvas, img.fg, img.coverage)
    return replace(img, pixels=to_uint8(canvas))


def add_border_or_shadow(img: BaseCharImage, rng: np.random.Generator, cfg: AugmentationConfig) -> BaseCharImage:
    return apply_border_shadow(img, *draw_border_shadow(rng, cfg))


# ---------------------------------------------------------------- projective warp

@dataclass(frozen=True, eq=False)
class ProjectiveTransform:
    h: np.ndarray

    def __post_init__(self):
        h = np.array(self.h, dtype=np.float64).reshape(3, 3)
        if not np.all(np.isfinite(h)) or abs(h[2, 2]) < 1e-12:
            raise SingularTransform("homography has no finite normalization")
        h = h / h[2, 2]
        if abs(np.linalg.det(h)) <= 1e-9:
            raise SingularTransform(f"homography determinant {np.linalg.det(h):.3g} too small")
        h.setflags(write=False)
        object.__setattr__(self, "h", h)

    @classmethod
    def identity(cls) -> "ProjectiveTransform":
        return cls(np.eye(3))

    @classmethod
    def translation(cls, dx: float, dy: float) -> "ProjectiveTransform":
        return cls(np.array([[1.0, 0.0, dx], [0.0, 1.0, dy], [0.0, 0.0, 1.0]]))

    def inverse(self) -> "ProjectiveTransform":
        return ProjectiveTransform(np.linalg.inv(self.h))

    def apply(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        homo = np.c_[pts, np.ones(len(pts))] @ self.h.T
        return homo[:, :2] / homo[:, 2:3]

    def to_list(self) -> list[float]:
        return [float(v) for v in self.h.ravel()]


def homography_from_points(src, dst) -> ProjectiveTransform:
    """Solve the 8-unknown system mapping four source points onto four targets."""
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    a = np.zeros((8, 8))
    b = np.zeros(8)
    for i, ((x, y), (u, v)) in enumerate(zip(src, dst)):
        a[2 * i] = [x, y, 1, 0, 0, 0, -u * x, -u * y]
        a[2 * i + 1] = [0, 0, 0, x, y, 1, -v * x, -v * y]
        b[2 * i], b[2 * i + 1] = u, v
    try:
        sol = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise DegenerateQuad("corner correspondences are degenerate") from exc
    return ProjectiveTransform(np.append(sol, 1.0).reshape(3, 3))


def canvas_corners(canvas) -> np.ndarray:
    h, w = canvas
    return np.array([[0, 0], [w - 1, 0], [w - 1, h - 1], [0, h - 1]], dtype=np.float64)


def is_convex_quad(quad: np.ndarray, eps: float = 1e-6) -> bool:
    crosses = []
    for i in range(4):
        a, b, c = quad[i], quad[(i + 1) % 4], quad[(i + 2) % 4]
        crosses.append((b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]))
    crosses = np.array(crosses)
    return bool(np.all(crosses > eps) or np.all(crosses < -eps))


def random_homography(rng: np.random.Generator, canvas, corner_jitter: float, max_attempts: int = 20) -> ProjectiveTransform:
    if not 0.0 <= corner_jitter < 0.5:
        raise ConfigError("corner_jitter must lie in [0, 0.5)")
    src = canvas_corners(canvas)
    reach = corner_jitter * min(canvas)
    for _ in range(max_attempts):
        dst = src + rng.uniform(-reach, reach, size=(4, 2))
        if reach == 0:
            return ProjectiveTransform.identity()
        if is_convex_quad(dst):
            return homography_from_points(src, dst)
    raise DegenerateQuad(f"no convex corner quad after {max_attempts} attempts")


def warp(img: np.ndarray, t: ProjectiveTransform, fill=0) -> np.ndarray:
    """Inverse-map every output pixel through ``t`` and sample bilinearly.

    Taps falling outside the source take the ``fill`` value.
    """
    src = np.asarray(img)
    h, w = src.shape[:2]
    inv = t.inverse().h
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    den = inv[2, 0] * xs + inv[2, 1] * ys + inv[2, 2]
    valid = den > 1e-12
    den = np.where(valid, den, 1.0)
    sx = (inv[0, 0] * xs + inv[0, 1] * ys + inv[0, 2]) / den
    sy = (inv[1, 0] * xs + inv[1, 1] * ys + inv[1, 2]) / den
    x0 = np.floor(sx)
    y0 = np.floor(sy)
    fx = (sx - x0)
    fy = (sy - y0)
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)

    channels = src.shape[2:]
    fill_value = np.broadcast_to(np.asarray(fill, dtype=np.float64), channels) if channels else float(np.asarray(fill).ravel()[0])
    srcf = src.astype(np.float64)

    def tap(yy, xx):
        inside = valid & (xx >= 0) & (xx < w) & (yy >= 0) & (yy < h)
        vals = srcf[np.clip(yy, 0, h - 1), np.clip(xx, 0, w - 1)]
        mask = inside[..., None] if channels else inside
        return np.where(mask, vals, fill_value)

    if channels:
        fx, fy = fx[..., None], fy[..., None]
    out = (tap(y0, x0) * (1 - fx) * (1 - fy) + tap(y0, x0 + 1) * fx * (1 - fy)
           + tap(y0 + 1, x0) * (1 - fx) * fy + tap(y0 + 1, x0 + 1) * fx * fy)
    return to_uint8(out) if src.dtype == np.uint8 else out.astype(src.dtype)


# ---------------------------------------------------------------- background blend

def match_channels(patch: np.ndarray, like: np.ndarray) -> np.ndarray:
    want = like.shape[2] if like.ndim == 3 else 0
    have = patch.shape[2] if patch.ndim == 3 else 0
    if have == 4:
        patch, have = patch[..., :3], 3
    if want == have:
        return patch
    if want == 3 and have in (0, 1):
        gray = patch if have == 0 else patch[..., 0]
        return np.repeat(gray[..., None], 3, axis=2)
    if want == 0 and have == 3:
        return to_uint8(luma(patch))
    if want == 1:
        return match_channels(patch, like[..., 0])[..., None]
    raise ConfigError(f"cannot match patch with shape {patch.shape} to image {like.shape}")


def crop_offset(patch_shape, img_shape, rng: np.random.Generator) -> tuple[int, int]:
    ph, pw = patch_shape[:2]
    h, w = img_shape[:2]
    if ph < h or pw < w:
        raise PatchTooSmall(f"background patch {ph}x{pw} is smaller than image {h}x{w}")
    return int(rng.integers(0, ph - h + 1)), int(rng.integers(0, pw - w + 1))


def apply_blend(img: np.ndarray, patch: np.ndarray, alpha: float, offset: tuple[int, int]) -> np.ndarray:
    h, w = img.shape[:2]
    top, left = offset
    if patch.shape[0] < top + h or patch.shape[1] < left + w:
        raise PatchTooSmall("crop window exceeds the background patch")
    crop = match_channels(patch[top:top + h, left:left + w], img)
    return to_uint8((1.0 - alpha) * img.astype(np.float64) + alpha * crop.astype(np.float64))


def blend_background(img: np.ndarray, patch: np.ndarray, alpha: float, rng: np.random.Generator) -> np.ndarray:
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"alpha {alpha} outside [0, 1]")
    return apply_blend(img, patch, alpha, crop_offset(patch.shape, img.shape, rng))


# ---------------------------------------------------------------- blur and noise

def gaussian_kernel(sigma: float) -> np.ndarray:
    radius = int(math.ceil(3 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-x * x / (2 * sigma * sigma))
    return k / k.sum()


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with symmetric (edge-reflected) borders; float output."""
    out = np.asarray(img, dtype=np.float64)
    if sigma <= 0:
        return out.copy()
    k = gaussian_kernel(sigma)
    r = len(k) // 2
    for axis in (0, 1):
        pad = [(0, 0)] * out.ndim
        pad[axis] = (r, r)
        padded = np.pad(out, pad, mode="symmetric")
        n = out.shape[axis]
        acc = np.zeros_like(out)
        for i, weight in enumerate(k):
            acc += weight * np.take(padded, np.arange(i, i + n), axis=axis)
        out = acc
    return out


def apply_noise_and_blur(img: np.ndarray, blur_sigma: float, noise_sigma: float, noise_rng: np.random.Generator) -> np.ndarray:
    """Blur by ``blur_sigma`` px, then add noise with std ``noise_sigma * 255``."""
    if blur_sigma <= 0 and noise_sigma <= 0:
        return np.array(img, copy=True)
    out = gaussian_blur(img, blur_sigma)
    if noise_sigma > 0:
        out = out + noise_rng.normal(0.0, noise_sigma * 255.0, size=out.shape)
    return to_uint8(out)


def add_noise_and_blur(img: np.ndarray, rng: np.random.Generator, cfg: AugmentationConfig) -> np.ndarray:
    blur_sigma = rng.uniform(*cfg.blur_sigma_range)
    noise_sigma = rng.uniform(*cfg.noise_sigma_range)
    return apply_noise_and_blur(img, blur_sigma, noise_sigma, rng)


def luma(rgb: np.ndarray) -> np.ndarray:
    rgb = np.asarray(rgb, dtype=np.float64)
    return 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]
