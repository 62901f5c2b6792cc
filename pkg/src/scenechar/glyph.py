"""Base character rendering: font registry, color palette, glyph rasterization."""
from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import yaml
from fontTools.ttLib import TTFont, TTLibError
from PIL import Image, ImageDraw, ImageFont

from .errors import (
    ConfigError,
    ContrastUnsatisfiable,
    GlyphMissing,
    MissingCategory,
    UnloadableFont,
)

RGB = tuple[int, int, int]

DEFAULT_CANVAS = (64, 64)
FILL_RATIO_RANGE = (0.70, 0.90)
DEFAULT_CONTRAST_FLOOR = 64
MIN_CANVAS = 16
_REF_SIZE = 128


class FontCategory(str, Enum):
    BASIC = "basic"
    DERIVED = "derived"
    SPECIAL = "special"


# cumulative sampling walks the categories in this order
CATEGORY_ORDER = (FontCategory.BASIC, FontCategory.DERIVED, FontCategory.SPECIAL)
DEFAULT_WEIGHTS = {
    FontCategory.BASIC: 0.30,
    FontCategory.DERIVED: 0.60,
    FontCategory.SPECIAL: 0.10,
}


@dataclass(frozen=True)
class FontEntry:
    id: str
    path: Path
    category: FontCategory
    display_name: str = ""

    def supports(self, codepoint: int) -> bool:
        return codepoint in _cmap(str(self.path))


@dataclass
class FontRegistry:
    entries: list[FontEntry]
    weights: dict[FontCategory, float] = field(default_factory=lambda: dict(DEFAULT_WEIGHTS))

    def __post_init__(self):
        if set(self.weights) != set(CATEGORY_ORDER):
            raise ConfigError(f"weights must cover exactly {[c.value for c in CATEGORY_ORDER]}")
        if any(w < 0 for w in self.weights.values()):
            raise ConfigError("category weights must be non-negative")
        if abs(sum(self.weights.values()) - 1.0) > 1e-9:
            raise ConfigError(f"category weights sum to {sum(self.weights.values())}, expected 1")
        ids = [e.id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ConfigError("font ids must be unique")
        for cat in CATEGORY_ORDER:
            if self.weights[cat] > 0 and not self.by_category(cat):
                raise MissingCategory(f"no font registered for category {cat.value!r}")

    def by_category(self, category: FontCategory) -> list[FontEntry]:
        return [e for e in self.entries if e.category == category]

    def get(self, font_id: str) -> FontEntry:
        for e in self.entries:
            if e.id == font_id:
                return e
        raise KeyError(font_id)

    def to_config(self) -> list[dict]:
        return [
            {"id": e.id, "path": str(e.path), "category": e.category.value, "display_name": e.display_name}
            for e in self.entries
        ]


@functools.lru_cache(maxsize=None)
def _cmap(path: str) -> frozenset[int]:
    with TTFont(path, lazy=True) as font:
        return frozenset(font.getBestCmap() or ())


@functools.lru_cache(maxsize=512)
def _pil_font(path: str, size: int) -> ImageFont.FreeTypeFont:
    return ImageFont.truetype(path, size, layout_engine=ImageFont.Layout.BASIC)


def _parse_category(value) -> FontCategory:
    try:
        return FontCategory(str(value).lower())
    except ValueError:
        raise ConfigError(f"unknown font category {value!r}") from None


def build_registry(font_specs: Iterable, weights: dict | None = None) -> FontRegistry:
    """Validate font files and group them by category.

    ``font_specs`` items are ``(path, category)`` or ``(path, category, id)``
    tuples, or dicts with ``path``, ``category`` and optional ``id`` and
    ``display_name`` keys.
    """
    entries = []
    for spec in font_specs:
        if isinstance(spec, dict):
            path, category = spec["path"], spec["category"]
            font_id = spec.get("id")
            display = spec.get("display_name", "")
        else:
            path, category, *rest = spec
            font_id = rest[0] if rest else None
            display = ""
        path = Path(path)
        try:
            _pil_font(str(path), 16)
            _cmap(str(path))
        except (OSError, TTLibError, ValueError) as exc:
            raise UnloadableFont(f"cannot load font {path}: {exc}") from exc
        entries.append(FontEntry(font_id or path.stem, path, _parse_category(category), display or path.stem))
    if weights is not None:
        weights = {_parse_category(k): float(v) for k, v in weights.items()}
        return FontRegistry(entries, weights)
    return FontRegistry(entries)


def load_font_config(path: str | Path, weights: dict | None = None) -> FontRegistry:
    """Read a YAML/JSON list of ``{path, category, id}``; paths are relative to the file."""
    path = Path(path)
    specs = yaml.safe_load(path.read_text(encoding="utf-8")) or []
    return registry_from_config(specs, path.parent, weights)


def registry_from_config(specs: list[dict], base_dir: Path, weights: dict | None = None) -> FontRegistry:
    resolved = []
    for spec in specs:
        spec = dict(spec)
        p = Path(spec["path"])
        spec["path"] = p if p.is_absolute() else base_dir / p
        resolved.append(spec)
    return build_registry(resolved, weights)


def sample_font(registry: FontRegistry, u: float, v: float) -> FontEntry:
    """Pick a font: category from ``u`` by cumulative weight, entry from ``v`` uniformly."""
    acc = 0.0
    chosen = None
    for cat in CATEGORY_ORDER:
        w = registry.weights[cat]
        if w <= 0:
            continue
        chosen = cat
        acc += w
        if u < acc:
            break
    fonts = registry.by_category(chosen)
    return fonts[min(int(v * len(fonts)), len(fonts) - 1)]


def color_distance(a: Sequence[int], b: Sequence[int]) -> int:
    return max(abs(int(x) - int(y)) for x, y in zip(a, b))


def parse_hex(text: str) -> RGB:
    s = text.strip().lstrip("#")
    if len(s) != 6:
        raise ConfigError(f"bad hex color {text!r}")
    try:
        return tuple(int(s[i:i + 2], 16) for i in (0, 2, 4))
    except ValueError:
        raise ConfigError(f"bad hex color {text!r}") from None


def to_hex(color: Sequence[int]) -> str:
    return "#{:02X}{:02X}{:02X}".format(*color)


@dataclass(frozen=True)
class ColorPalette:
    colors: tuple[RGB, ...]

    def __post_init__(self):
        colors = tuple(tuple(int(c) for c in rgb) for rgb in self.colors)
        if not colors:
            raise ConfigError("palette is empty")
        for rgb in colors:
            if len(rgb) != 3 or any(not 0 <= c <= 255 for c in rgb):
                raise ConfigError(f"invalid RGB triple {rgb}")
        if len(set(colors)) != len(colors):
            raise ConfigError("palette colors must be distinct")
        object.__setattr__(self, "colors", colors)

    @property
    def size(self) -> int:
        return len(self.colors)

    @classmethod
    def lattice(cls, levels=(0, 128, 255)) -> "ColorPalette":
        return cls(tuple(itertools.product(levels, repeat=3)))

    @classmethod
    def from_hex(cls, values: Iterable[str]) -> "ColorPalette":
        return cls(tuple(parse_hex(v) for v in values))

    @classmethod
    def load(cls, path: str | Path) -> "ColorPalette":
        return cls.from_hex(yaml.safe_load(Path(path).read_text(encoding="utf-8")))

    def to_hex(self) -> list[str]:
        return [to_hex(c) for c in self.colors]


def sample_color_pair(
    palette: ColorPalette,
    rng: np.random.Generator,
    contrast_floor: int = DEFAULT_CONTRAST_FLOOR,
    max_attempts: int = 100,
) -> tuple[RGB, RGB]:
    """Draw a foreground/background pair at least ``contrast_floor`` apart.

    The foreground is drawn among colors that have some valid partner; the
    background is redrawn until it contrasts, and after ``max_attempts``
    misses it is drawn directly from the valid partners.
    """
    colors = palette.colors
    if len(colors) < 2:
        raise ContrastUnsatisfiable("palette needs at least two colors")
    floor = max(int(contrast_floor), 1)
    partners = [
        [j for j, other in enumerate(colors) if color_distance(c, other) >= floor]
        for c in colors
    ]
    usable = [i for i, p in enumerate(partners) if p]
    if not usable:
        raise ContrastUnsatisfiable(f"no palette pair differs by at least {floor} in any channel")
    fg = usable[int(rng.integers(len(usable)))]
    for _ in range(max_attempts):
        bg = int(rng.integers(len(colors)))
        if bg in partners[fg]:
            break
    else:
        bg = partners[fg][int(rng.integers(len(partners[fg])))]
    return colors[fg], colors[bg]


@dataclass
class BaseCharImage:
    pixels: np.ndarray  # H x W x 3 uint8
    label: int
    font_id: str
    fg: RGB
    bg: RGB
    coverage: np.ndarray  # H x W float32 glyph alpha in [0, 1]


def _ink_bbox(pil: ImageFont.FreeTypeFont, ch: str) -> tuple[int, int, int, int]:
    # getbbox spans the advance horizontally; measure the inked pixels instead
    left, top, right, bottom = pil.getbbox(ch)
    pad = 2
    probe = Image.new("L", (right - left + 2 * pad, bottom - top + 2 * pad), 0)
    ImageDraw.Draw(probe).text((pad - left, pad - top), ch, font=pil, fill=255)
    box = probe.getbbox()
    if box is None:
        return 0, 0, 0, 0
    return box[0] + left - pad, box[1] + top - pad, box[2] + left - pad, box[3] + top - pad


def glyph_coverage(font: FontEntry, codepoint: int, canvas: tuple[int, int], fill_ratio: float) -> np.ndarray:
    """Anti-aliased glyph mask, centered, longest ink side = fill_ratio * min(H, W)."""
    height, width = canvas
    if not font.supports(codepoint):
        raise GlyphMissing(f"font {font.id} has no glyph for U+{codepoint:04X}")
    ch = chr(codepoint)
    left, top, right, bottom = _ink_bbox(_pil_font(str(font.path), _REF_SIZE), ch)
    extent = max(right - left, bottom - top)
    if extent <= 0:
        raise GlyphMissing(f"font {font.id} renders U+{codepoint:04X} as blank")
    target = fill_ratio * min(height, width)
    size = max(1, int(round(_REF_SIZE * target / extent)))
    while True:
        pil = _pil_font(str(font.path), size)
        left, top, right, bottom = _ink_bbox(pil, ch)
        if max(right - left, bottom - top) <= min(height, width) or size == 1:
            break
        size -= 1
    x = int(round((width - (right - left)) / 2 - left))
    y = int(round((height - (bottom - top)) / 2 - top))
    mask = Image.new("L", (width, height), 0)
    ImageDraw.Draw(mask).text((x, y), ch, font=pil, fill=255)
    return np.asarray(mask, dtype=np.float32) / 255.0


def composite(base: np.ndarray, color: Sequence[int], alpha: np.ndarray) -> np.ndarray:
    """Paint ``color`` over ``base`` (float H x W x 3) with per-pixel ``alpha``."""
    a = alpha[..., None]
    return base * (1.0 - a) + np.asarray(color, dtype=np.float64) * a


def to_uint8(values: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(values), 0, 255).astype(np.uint8)


def render_glyph(
    codepoint: int,
    font: FontEntry,
    fg: RGB,
    bg: RGB,
    canvas: tuple[int, int] = DEFAULT_CANVAS,
    rng: np.random.Generator | None = None,
    fill_ratio: float | None = None,
) -> BaseCharImage:
    height, width = canvas
    if height < MIN_CANVAS or width < MIN_CANVAS:
        raise ConfigError(f"canvas {canvas} is smaller than {MIN_CANVAS}x{MIN_CANVAS}")
    if fill_ratio is None:
        fill_ratio = rng.uniform(*FILL_RATIO_RANGE) if rng is not None else sum(FILL_RATIO_RANGE) / 2
    coverage = glyph_coverage(font, codepoint, canvas, fill_ratio)
    background = np.empty((height, width, 3), dtype=np.float64)
    background[...] = bg
    pixels = to_uint8(composite(background, fg, coverage))
    return BaseCharImage(pixels, codepoint, font.id, tuple(fg), tuple(bg), coverage)


def fill_ratio_ok(value: float) -> bool:
    lo, hi = FILL_RATIO_RANGE
    return lo - 1e-12 <= value <= hi + 1e-12 and not math.isnan(value)
