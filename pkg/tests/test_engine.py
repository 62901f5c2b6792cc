from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scenechar.dataset import Vocabulary
from scenechar.engine import (
    EngineConfig,
    Source,
    data_path,
    generate,
    label_for_index,
    provenance_violations,
    replay,
    sample_provenance,
    synthesize,
)
from scenechar.errors import ConfigError
from scenechar.glyph import FontCategory
from scenechar.rng import GOLDEN_GAMMA, derive_seed, image_rng, splitmix64_mix


@pytest.fixture(scope="module")
def engine():
    return EngineConfig.default()


@pytest.fixture(scope="module")
def scene():
    return EngineConfig.scene_like()


@pytest.fixture(scope="module")
def vocab():
    return Vocabulary.load(data_path("vocab50.txt"))


def test_splitmix_reference_vector():
    # first outputs of the reference SplitMix64 generator started from state 0
    assert splitmix64_mix(GOLDEN_GAMMA) == 0xE220A8397B1DCDAF
    assert splitmix64_mix(2 * GOLDEN_GAMMA) == 0x6E789E6AA1B965F4


def test_derived_seeds_are_distinct():
    seeds = {derive_seed(7, i) for i in range(10_000)}
    assert len(seeds) == 10_000
    assert derive_seed(7, 3) != derive_seed(8, 3)
    assert image_rng(7, 3).random() == image_rng(7, 3).random()


def test_vocabulary_file():
    v = Vocabulary.load(data_path("vocab50.txt"))
    assert len(v) == 50


def test_scene_config_is_disjoint(engine, scene):
    fonts = {e.path.name for e in engine.registry.entries}
    scene_fonts = {e.path.name for e in scene.registry.entries}
    assert not fonts & scene_fonts
    assert not set(engine.palette.colors) & set(scene.palette.colors)
    assert engine.backgrounds and scene.backgrounds
    assert not set(engine.backgrounds) & set(scene.backgrounds)


def test_every_font_covers_vocabulary(engine, scene, vocab):
    for cfg in (engine, scene):
        for font in cfg.registry.entries:
            missing = [chr(c) for c in vocab if not font.supports(c)]
            assert not missing, (font.id, missing)


def test_synthesize_is_pure(engine):
    a = synthesize(ord("中"), engine, seed=3, index=17)
    b = synthesize(ord("中"), engine, seed=3, index=17)
    c = synthesize(ord("中"), engine, seed=3, index=18)
    assert a.pixels.shape == (48, 48, 3) and a.pixels.dtype == np.uint8
    assert a.pixels.tobytes() == b.pixels.tobytes()
    assert a.provenance == b.provenance
    assert a.pixels.tobytes() != c.pixels.tobytes()


@pytest.mark.parametrize("index", range(8))
def test_replay_is_bit_exact(engine, index):
    img = synthesize(ord("国"), engine, seed=11, index=index)
    again = replay(img, engine)
    assert again.pixels.tobytes() == img.pixels.tobytes()


def test_generation_order_independent(engine, vocab):
    full = list(generate(engine, vocab, 12, seed=5))
    tail = list(generate(engine, vocab, 4, seed=5, start=8))
    assert [i.pixels.tobytes() for i in full[8:]] == [i.pixels.tobytes() for i in tail]


def test_threads_match_serial(engine, vocab):
    serial = list(generate(engine, vocab, 16, seed=9, threads=1))
    parallel = list(generate(engine, vocab, 16, seed=9, threads=2))
    assert [i.pixels.tobytes() for i in serial] == [i.pixels.tobytes() for i in parallel]
    assert [i.label for i in serial] == [i.label for i in parallel]


def test_generate_zero_count(engine, vocab):
    assert list(generate(engine, vocab, 0, seed=1)) == []


def test_round_robin_labels(vocab):
    labels = [label_for_index(list(vocab), i) for i in range(150)]
    assert all(labels.count(c) == 3 for c in vocab)


def test_source_tag(engine, vocab):
    imgs = list(generate(engine, vocab, 2, seed=1, source=Source.SCENE))
    assert all(i.source == Source.SCENE for i in imgs)


def test_provenance_within_ranges(engine, scene, vocab):
    for cfg in (engine, scene):
        for i in range(300):
            rng = image_rng(21, i)
            prov = sample_provenance(vocab[i % 50], cfg, rng)
            assert provenance_violations(prov, cfg) == []


def test_out_of_range_provenance_is_flagged(engine):
    prov = sample_provenance(ord("中"), engine, image_rng(0, 0))
    assert provenance_violations(replace(prov, blur_sigma=9.0), engine)
    assert provenance_violations(replace(prov, fill_ratio=0.2), engine)
    assert provenance_violations(replace(prov, fg=prov.bg), engine)
    assert provenance_violations(replace(prov, font_category="special" if prov.font_category != "special" else "basic"), engine)


def test_category_frequencies(engine):
    counts = {c.value: 0 for c in FontCategory}
    n = 5000
    for i in range(n):
        counts[sample_provenance(ord("人"), engine, image_rng(2, i)).font_category] += 1
    assert abs(counts["basic"] / n - 0.30) < 0.02
    assert abs(counts["derived"] / n - 0.60) < 0.02
    assert abs(counts["special"] / n - 0.10) < 0.02


def test_provenance_digest_stable(engine):
    prov = sample_provenance(ord("大"), engine, image_rng(4, 4))
    assert prov.digest() == type(prov).from_dict(prov.to_dict()).digest()
    assert len(prov.digest()) == 16
    assert prov.digest() != replace(prov, noise_seed=prov.noise_seed + 1).digest()


def test_config_round_trip(engine):
    again = EngineConfig.from_dict(engine.to_dict())
    assert again.to_dict() == engine.to_dict()
    img = synthesize(ord("大"), engine, 1, 1)
    assert replay(img, again).pixels.tobytes() == img.pixels.tobytes()


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        EngineConfig.load(tmp_path / "nope.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("fonts: %s\nwarp: 1\n" % data_path("fonts_default.yaml"))
    with pytest.raises(ConfigError):
        EngineConfig.load(bad)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**63 - 1), index=st.integers(0, 10**9))
def test_any_seed_renders_cleanly(engine, seed, index):
    img = synthesize(ord("回"), engine, seed, index)
    assert img.pixels.shape == (48, 48, 3)
    assert provenance_violations(img.provenance, engine) == []
