import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scenechar.engine import data_path
from scenechar.errors import ConfigError, ContrastUnsatisfiable, GlyphMissing, MissingCategory, UnloadableFont
from scenechar.glyph import (
    ColorPalette,
    FontCategory,
    build_registry,
    color_distance,
    load_font_config,
    parse_hex,
    render_glyph,
    sample_color_pair,
    sample_font,
    to_hex,
)

FONTS = data_path("fonts")
SANS = FONTS / "noto-sans-sc-400.ttf"
SERIF = FONTS / "noto-serif-sc-400.ttf"
KUAILE = FONTS / "zcool-kuaile.ttf"


@pytest.fixture(scope="module")
def registry():
    return load_font_config(data_path("fonts_default.yaml"))


def test_minimal_registry():
    reg = build_registry([(SANS, "basic"), (SERIF, "derived"), (KUAILE, "special")])
    assert len(reg.entries) == 3
    assert reg.weights == {FontCategory.BASIC: 0.30, FontCategory.DERIVED: 0.60, FontCategory.SPECIAL: 0.10}


def test_registry_of_32_entries():
    specs = [(SANS, "basic", f"b{i}") for i in range(3)]
    specs += [(SERIF, "derived", f"d{i}") for i in range(24)]
    specs += [(KUAILE, "special", f"s{i}") for i in range(5)]
    reg = build_registry(specs)
    assert len(reg.entries) == 32
    assert [len(reg.by_category(c)) for c in FontCategory] == [3, 24, 5]


def test_missing_category():
    with pytest.raises(MissingCategory):
        build_registry([(SANS, "basic"), (SERIF, "derived")])


def test_unloadable_font(tmp_path):
    bad = tmp_path / "broken.ttf"
    bad.write_bytes(b"not a font")
    with pytest.raises(UnloadableFont):
        build_registry([(bad, "basic"), (SERIF, "derived"), (KUAILE, "special")])


def test_weights_must_sum_to_one():
    with pytest.raises(ConfigError):
        build_registry([(SANS, "basic"), (SERIF, "derived"), (KUAILE, "special")],
                       {"basic": 0.3, "derived": 0.6, "special": 0.2})


def test_sample_font_endpoints(registry):
    assert sample_font(registry, 0.0, 0.5).category == FontCategory.BASIC
    assert sample_font(registry, 0.2999, 0.0).category == FontCategory.BASIC
    assert sample_font(registry, 0.30, 0.0).category == FontCategory.DERIVED
    assert sample_font(registry, 0.8999, 0.99).category == FontCategory.DERIVED
    assert sample_font(registry, 0.95, 0.5).category == FontCategory.SPECIAL
    assert sample_font(registry, 0.99999, 0.99999).category == FontCategory.SPECIAL


def test_category_law_10k(registry):
    rng = np.random.default_rng(0)
    counts = {c: 0 for c in FontCategory}
    for u, v in rng.random((10_000, 2)):
        counts[sample_font(registry, u, v).category] += 1
    freqs = [counts[c] / 10_000 for c in FontCategory]
    assert np.allclose(freqs, [0.30, 0.60, 0.10], atol=0.02)


def test_sample_font_uniform_within_category(registry):
    basics = registry.by_category(FontCategory.BASIC)
    picked = {sample_font(registry, 0.1, v).id for v in np.linspace(0, 0.9999, 50)}
    assert picked == {f.id for f in basics}


# ---- colors

def test_hex_round_trip():
    assert parse_hex("#FF8000") == (255, 128, 0)
    assert to_hex((255, 128, 0)) == "#FF8000"
    with pytest.raises(ConfigError):
        parse_hex("#12")


def test_palette_invariants():
    assert ColorPalette.lattice().size == 27
    with pytest.raises(ConfigError):
        ColorPalette(())
    with pytest.raises(ConfigError):
        ColorPalette(((1, 2, 3), (1, 2, 3)))


def test_black_white_pair():
    pal = ColorPalette(((0, 0, 0), (255, 255, 255)))
    rng = np.random.default_rng(1)
    for _ in range(20):
        assert sample_color_pair(pal, rng) in {((0, 0, 0), (255, 255, 255)), ((255, 255, 255), (0, 0, 0))}


def test_lattice_pairs_never_equal():
    pal = ColorPalette.lattice()
    rng = np.random.default_rng(2)
    for _ in range(10_000):
        fg, bg = sample_color_pair(pal, rng)
        assert fg != bg
        assert color_distance(fg, bg) >= 64


def test_near_identical_grays_unsatisfiable():
    with pytest.raises(ContrastUnsatisfiable):
        sample_color_pair(ColorPalette(((120, 120, 120), (130, 130, 130))), np.random.default_rng(0), 64)


def test_fallback_after_attempt_cap():
    # one partner among many: rejection sampling rarely hits it, the fallback must
    colors = [(v, v, v) for v in range(0, 60)] + [(255, 255, 255)]
    pal = ColorPalette(tuple(colors))
    rng = np.random.default_rng(3)
    for _ in range(50):
        fg, bg = sample_color_pair(pal, rng, 64, max_attempts=1)
        assert color_distance(fg, bg) >= 64


# ---- rendering

def fg_count(img):
    px = img.pixels.astype(int)
    d_fg = np.abs(px - np.array(img.fg)).sum(axis=2)
    d_bg = np.abs(px - np.array(img.bg)).sum(axis=2)
    return int((d_fg < d_bg).sum())


def test_render_not_empty_nor_flooded(registry):
    img = render_glyph(ord("中"), registry.get("noto-sans-400"), (0, 0, 0), (255, 255, 255))
    assert img.pixels.shape == (64, 64, 3) and img.pixels.dtype == np.uint8
    assert 0 < fg_count(img) < 64 * 64


def test_render_deterministic(registry):
    font = registry.get("lxgw-wenkai-regular")
    a = render_glyph(ord("国"), font, (255, 0, 0), (0, 0, 255), rng=np.random.default_rng(4))
    b = render_glyph(ord("国"), font, (255, 0, 0), (0, 0, 255), rng=np.random.default_rng(4))
    assert a.pixels.tobytes() == b.pixels.tobytes()


@pytest.mark.parametrize("font_id", ["noto-sans-400", "noto-serif-400", "lxgw-wenkai-regular", "zcool-kuaile"])
def test_one_has_fewer_strokes_than_hui(registry, font_id):
    font = registry.get(font_id)
    one = render_glyph(0x4E00, font, (0, 0, 0), (255, 255, 255), fill_ratio=0.8)
    hui = render_glyph(0x56DE, font, (0, 0, 0), (255, 255, 255), fill_ratio=0.8)
    assert fg_count(one) < fg_count(hui)


@pytest.mark.parametrize("ratio", [0.70, 0.80, 0.90])
def test_fill_ratio_sets_bbox(registry, ratio):
    img = render_glyph(ord("回"), registry.get("noto-sans-400"), (0, 0, 0), (255, 255, 255), fill_ratio=ratio)
    ys, xs = np.nonzero(img.coverage > 0.5)
    extent = max(ys.max() - ys.min() + 1, xs.max() - xs.min() + 1)
    assert abs(extent - ratio * 64) <= 3


def test_glyph_centered(registry):
    img = render_glyph(ord("回"), registry.get("noto-serif-400"), (0, 0, 0), (255, 255, 255), fill_ratio=0.8)
    ys, xs = np.nonzero(img.coverage > 0.5)
    assert abs((ys.min() + ys.max()) / 2 - 31.5) <= 2
    assert abs((xs.min() + xs.max()) / 2 - 31.5) <= 2


def test_glyph_missing(registry):
    with pytest.raises(GlyphMissing):
        render_glyph(0x9F98, registry.get("noto-sans-400"), (0, 0, 0), (255, 255, 255))  # outside the shipped subset


def test_canvas_too_small(registry):
    with pytest.raises(ConfigError):
        render_glyph(ord("中"), registry.get("noto-sans-400"), (0, 0, 0), (255, 255, 255), canvas=(12, 12))


@settings(max_examples=25, deadline=None)
@given(h=st.integers(16, 80), w=st.integers(16, 80), seed=st.integers(0, 2**32 - 1))
def test_render_stays_on_canvas(registry, h, w, seed):
    rng = np.random.default_rng(seed)
    fg, bg = sample_color_pair(ColorPalette.lattice(), rng)
    img = render_glyph(ord("大"), registry.get("noto-sans-700"), fg, bg, canvas=(h, w), rng=rng)
    assert img.pixels.shape == (h, w, 3)
    assert img.coverage.min() >= 0 and img.coverage.max() <= 1
    assert fg_count(img) > 0
    assert not img.coverage[[0, 0, -1, -1], [0, -1, 0, -1]].any()
