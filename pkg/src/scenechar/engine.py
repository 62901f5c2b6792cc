"""The synthetic data engine: config, per-image provenance, and the full pipeline."""
from __future__ import annotations

import hashlib
import json
import multiprocessing
from dataclasses import asdict, dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
import yaml
from PIL import Image

from . import augment
from .augment import AugmentationConfig, ProjectiveTransform
from .errors import ConfigError, GlyphMissing
from .glyph import (
    DEFAULT_CANVAS,
    DEFAULT_CONTRAST_FLOOR,
    FILL_RATIO_RANGE,
    ColorPalette,
    FontCategory,
    FontRegistry,
    color_distance,
    render_glyph,
    registry_from_config,
    sample_color_pair,
    sample_font,
    to_hex,
    to_uint8,
)
from .rng import image_rng

ENGINE_VERSION = "1"
DEFAULT_OUTPUT_SIZE = (48, 48)
MAX_FONT_ATTEMPTS = 10


class Source(str, Enum):
    ARTIFICIAL = "Artificial"
    SCENE = "Scene"


def data_path(*parts: str) -> Path:
    """Location of a file bundled with the package."""
    return Path(str(resources.files("scenechar").joinpath("data", *parts)))


@dataclass
class EngineConfig:
    registry: FontRegistry
    palette: ColorPalette
    augment: AugmentationConfig = field(default_factory=AugmentationConfig)
    canvas: tuple[int, int] = DEFAULT_CANVAS
    output_size: tuple[int, int] = DEFAULT_OUTPUT_SIZE
    grayscale: bool = False
    contrast_floor: int = DEFAULT_CONTRAST_FLOOR
    backgrounds: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.canvas = tuple(int(v) for v in self.canvas)
        self.output_size = tuple(int(v) for v in self.output_size)
        if not self.backgrounds and self.augment.background_dir is not None:
            self.backgrounds = load_backgrounds(self.augment.background_dir)
        for name, patch in self.backgrounds.items():
            if patch.shape[0] < self.canvas[0] or patch.shape[1] < self.canvas[1]:
                raise ConfigError(f"background {name} is smaller than the {self.canvas} canvas")

    @classmethod
    def from_dict(cls, data: dict, base_dir: Path | str = ".") -> "EngineConfig":
        base_dir = Path(base_dir)
        data = dict(data)
        fonts = data.pop("fonts")
        if isinstance(fonts, str):
            font_file = _resolve(fonts, base_dir)
            fonts = yaml.safe_load(font_file.read_text(encoding="utf-8"))
            font_base = font_file.parent
        else:
            font_base = base_dir
        registry = registry_from_config(fonts, font_base, data.pop("category_weights", None))
        palette_spec = data.pop("palette", "lattice")
        if palette_spec == "lattice":
            palette = ColorPalette.lattice()
        elif isinstance(palette_spec, str):
            palette = ColorPalette.load(_resolve(palette_spec, base_dir))
        else:
            palette = ColorPalette.from_hex(palette_spec)
        aug = AugmentationConfig.from_dict(data.pop("augment", {}), base_dir)
        known = {"canvas", "output_size", "grayscale", "contrast_floor"}
        if set(data) - known:
            raise ConfigError(f"unknown engine config keys: {sorted(set(data) - known)}")
        return cls(registry=registry, palette=palette, augment=aug, **data)

    @classmethod
    def load(cls, path: str | Path) -> "EngineConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"engine config not found: {path}")
        return cls.from_dict(yaml.safe_load(path.read_text(encoding="utf-8")) or {}, path.parent)

    @classmethod
    def default(cls) -> "EngineConfig":
        return cls.load(data_path("engine_default.yaml"))

    @classmethod
    def scene_like(cls) -> "EngineConfig":
        """Disjoint fonts, palette and backgrounds; stands in for real scene data."""
        return cls.load(data_path("engine_scene.yaml"))

    def to_dict(self) -> dict:
        """Fully resolved config (absolute paths); loadable again with ``from_dict``."""
        return {
            "fonts": self.registry.to_config(),
            "category_weights": {c.value: w for c, w in self.registry.weights.items()},
            "palette": self.palette.to_hex(),
            "augment": self.augment.to_dict(),
            "canvas": list(self.canvas),
            "output_size": list(self.output_size),
            "grayscale": self.grayscale,
            "contrast_floor": self.contrast_floor,
        }


def _resolve(path: str, base_dir: Path) -> Path:
    p = Path(path)
    return p if p.is_absolute() else base_dir / p


def load_backgrounds(directory: Path) -> dict[str, np.ndarray]:
    directory = Path(directory)
    if not directory.is_dir():
        raise ConfigError(f"background directory not found: {directory}")
    patches = {}
    for path in sorted(directory.iterdir()):
        if path.suffix.lower() in {".png", ".jpg", ".jpeg", ".bmp"}:
            with Image.open(path) as im:
                patches[path.stem] = np.asarray(im.convert("RGB"))
    if not patches:
        raise ConfigError(f"no background images in {directory}")
    return patches


@dataclass(frozen=True)
class Provenance:
    """Every sampled parameter of one image; enough to regenerate it exactly."""

    font_id: str
    font_category: str
    fg: tuple[int, int, int]
    bg: tuple[int, int, int]
    fill_ratio: float
    border_width: int
    shadow_offset: tuple[int, int] | None
    homography: tuple[float, ...]
    background_id: str | None
    blend_alpha: float
    crop: tuple[int, int]
    blur_sigma: float
    noise_sigma: float
    noise_seed: int
    output_size: tuple[int, int]
    grayscale: bool
    engine_version: str = ENGINE_VERSION

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("fg", "bg", "homography", "crop", "output_size"):
            d[key] = list(d[key])
        if self.shadow_offset is not None:
            d["shadow_offset"] = list(self.shadow_offset)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Provenance":
        d = dict(d)
        for key in ("fg", "bg", "homography", "crop", "output_size"):
            d[key] = tuple(d[key])
        if d.get("shadow_offset") is not None:
            d["shadow_offset"] = tuple(d["shadow_offset"])
        return cls(**d)

    def digest(self) -> str:
        """64-bit hash of the canonical JSON form, as 16 hex digits."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.blake2b(blob, digest_size=8).hexdigest()


@dataclass
class LabeledImage:
    pixels: np.ndarray
    label: int
    source: Source = Source.ARTIFICIAL
    provenance: Provenance | None = None

    @property
    def char(self) -> str:
        return chr(self.label)


def finalize(img: np.ndarray, output_size=DEFAULT_OUTPUT_SIZE, grayscale: bool = False) -> np.ndarray:
    """Resize to the network input size; optionally reduce to luma."""
    h, w = output_size
    out = np.asarray(Image.fromarray(img).resize((w, h), Image.Resampling.BILINEAR))
    if grayscale and out.ndim == 3:
        out = to_uint8(augment.luma(out))
    return out


def sample_provenance(codepoint: int, engine: EngineConfig, rng: np.random.Generator) -> Provenance:
    cfg = engine.augment
    for _ in range(MAX_FONT_ATTEMPTS):
        font = sample_font(engine.registry, rng.random(), rng.random())
        if font.supports(codepoint):
            break
    else:
        raise GlyphMissing(f"no font found for U+{codepoint:04X} after {MAX_FONT_ATTEMPTS} draws")
    fg, bg = sample_color_pair(engine.palette, rng, engine.contrast_floor)
    fill_ratio = float(rng.uniform(*FILL_RATIO_RANGE))
    border, shadow = augment.draw_border_shadow(rng, cfg)
    transform = augment.random_homography(rng, engine.canvas, cfg.corner_jitter)
    if engine.backgrounds:
        names = sorted(engine.backgrounds)
        background_id = names[int(rng.integers(len(names)))]
        alpha = float(rng.uniform(*cfg.blend_alpha_range))
        crop = augment.crop_offset(engine.backgrounds[background_id].shape, engine.canvas, rng)
    else:
        background_id, alpha, crop = None, 0.0, (0, 0)
    blur_sigma = float(rng.uniform(*cfg.blur_sigma_range))
    noise_sigma = float(rng.uniform(*cfg.noise_sigma_range))
    noise_seed = int(rng.integers(0, 2**63))
    return Provenance(
        font_id=font.id,
        font_category=font.category.value,
        fg=tuple(fg),
        bg=tuple(bg),
        fill_ratio=fill_ratio,
        border_width=border,
        shadow_offset=shadow,
        homography=tuple(transform.to_list()),
        background_id=background_id,
        blend_alpha=alpha,
        crop=crop,
        blur_sigma=blur_sigma,
        noise_sigma=noise_sigma,
        noise_seed=noise_seed,
        output_size=engine.output_size,
        grayscale=engine.grayscale,
    )


def render(codepoint: int, prov: Provenance, engine: EngineConfig) -> LabeledImage:
    """Deterministically rebuild an image from its provenance record."""
    font = engine.registry.get(prov.font_id)
    base = render_glyph(codepoint, font, prov.fg, prov.bg, engine.canvas, fill_ratio=prov.fill_ratio)
    base = augment.apply_border_shadow(base, prov.border_width, prov.shadow_offset)
    img = augment.warp(base.pixels, ProjectiveTransform(np.array(prov.homography)), fill=prov.bg)
    if prov.background_id is not None:
        img = augment.apply_blend(img, engine.backgrounds[prov.background_id], prov.blend_alpha, prov.crop)
    noise_rng = np.random.Generator(np.random.PCG64(prov.noise_seed))
    img = augment.apply_noise_and_blur(img, prov.blur_sigma, prov.noise_sigma, noise_rng)
    img = finalize(img, prov.output_size, prov.grayscale)
    return LabeledImage(img, codepoint, Source.ARTIFICIAL, prov)


def synthesize(codepoint: int, engine: EngineConfig, seed: int, index: int) -> LabeledImage:
    """One artificial scene character; a pure function of (inputs, seed, index)."""
    rng = image_rng(seed, index)
    return render(codepoint, sample_provenance(codepoint, engine, rng), engine)


def replay(image: LabeledImage, engine: EngineConfig) -> LabeledImage:
    return render(image.label, image.provenance, engine)


def provenance_violations(prov: Provenance, engine: EngineConfig) -> list[str]:
    """Parameters lying outside the engine's configured ranges (empty when clean)."""
    cfg = engine.augment
    problems = []

    def check(name, value, lo, hi):
        if not lo - 1e-12 <= value <= hi + 1e-12:
            problems.append(f"{name}={value} outside [{lo}, {hi}]")

    try:
        font = engine.registry.get(prov.font_id)
        if font.category.value != prov.font_category:
            problems.append(f"font {prov.font_id} recorded as {prov.font_category}")
    except KeyError:
        problems.append(f"unknown font {prov.font_id}")
    for name in ("fg", "bg"):
        if tuple(getattr(prov, name)) not in engine.palette.colors:
            problems.append(f"{name} {to_hex(getattr(prov, name))} not in palette")
    if color_distance(prov.fg, prov.bg) < engine.contrast_floor:
        problems.append("fg/bg contrast below floor")
    check("fill_ratio", prov.fill_ratio, *FILL_RATIO_RANGE)
    if prov.border_width:
        check("border_width", prov.border_width, *augment.BORDER_WIDTHS)
    if prov.shadow_offset is not None:
        for v in prov.shadow_offset:
            check("shadow_offset", v, *augment.SHADOW_OFFSETS)
    h = ProjectiveTransform(np.array(prov.homography))
    corners = augment.canvas_corners(engine.canvas)
    moved = np.abs(h.apply(corners) - corners).max()
    check("corner_displacement", moved, 0.0, cfg.corner_jitter * min(engine.canvas) + 1e-6)
    if prov.background_id is not None:
        check("blend_alpha", prov.blend_alpha, *cfg.blend_alpha_range)
        if prov.background_id not in engine.backgrounds:
            problems.append(f"unknown background {prov.background_id}")
    check("blur_sigma", prov.blur_sigma, *cfg.blur_sigma_range)
    check("noise_sigma", prov.noise_sigma, *cfg.noise_sigma_range)
    return problems


# ---------------------------------------------------------------- batch generation

def label_for_index(vocabulary: Sequence[int], index: int) -> int:
    """Round-robin over the vocabulary, so every class gets count/K images."""
    return vocabulary[index % len(vocabulary)]


_worker_state: dict = {}


def _init_worker(engine, vocabulary, seed, source):
    _worker_state.update(engine=engine, vocabulary=vocabulary, seed=seed, source=source)


def _generate_one(index: int) -> LabeledImage:
    st = _worker_state
    img = synthesize(label_for_index(st["vocabulary"], index), st["engine"], st["seed"], index)
    img.source = st["source"]
    return img


def generate(
    engine: EngineConfig,
    vocabulary: Sequence[int],
    count: int,
    seed: int,
    threads: int = 1,
    start: int = 0,
    source: Source = Source.ARTIFICIAL,
) -> Iterator[LabeledImage]:
    """Yield images for indices ``start .. start+count-1`` in index order.

    With ``threads > 1`` the work is spread over worker processes; the output
    is the same image-for-image because each index owns its random stream.
    """
    vocabulary = list(vocabulary)
    indices = range(start, start + count)
    if count <= 0:
        return
    if threads <= 1:
        _init_worker(engine, vocabulary, seed, source)
        for i in indices:
            yield _generate_one(i)
        return
    ctx = multiprocessing.get_context("fork")
    with ctx.Pool(threads, initializer=_init_worker, initargs=(engine, vocabulary, seed, source)) as pool:
        yield from pool.imap(_generate_one, indices, chunksize=max(1, min(64, count // (threads * 4) or 1)))


__all__ = [
    "ENGINE_VERSION",
    "EngineConfig",
    "FontCategory",
    "LabeledImage",
    "Provenance",
    "Source",
    "finalize",
    "generate",
    "provenance_violations",
    "render",
    "replay",
    "synthesize",
]
