import numpy as np
import pytest
from PIL import Image

from postocr.errors import EmptyRootError, InsufficientDataError, MissingGlyphError, UnsupportedCharacterError
from postocr.glyphset import (
    CLASSES,
    GARBAGE,
    RenderSpec,
    build_glyph_dataset,
    bundled_fonts,
    char_class,
    default_augmentation,
    load_external_images,
    render_garbage_images,
    render_glyph,
)

FONT = bundled_fonts(1)[0]


def test_class_inventory():
    assert len(CLASSES) == 63
    assert len({c.value for c in CLASSES}) == 63
    assert [c.class_id for c in CLASSES] == list(range(63))
    assert GARBAGE.class_id == 62
    assert char_class("A").value == "A"
    assert char_class("0").class_id == 0


def test_render_is_deterministic_without_augmentation():
    spec = RenderSpec(FONT)
    a = render_glyph("A", spec, seed=1)
    b = render_glyph("A", spec, seed=99)
    np.testing.assert_array_equal(a.pixels, b.pixels)
    assert a.label == char_class("A")
    assert a.pixels.shape == (64, 64)


def test_render_seed_changes_augmented_image():
    spec = default_augmentation(FONT)
    a = render_glyph("A", spec, seed=1)
    np.testing.assert_array_equal(a.pixels, render_glyph("A", spec, seed=1).pixels)
    assert not np.array_equal(a.pixels, render_glyph("A", spec, seed=2).pixels)


def test_render_rejects_unsupported_and_missing():
    with pytest.raises(UnsupportedCharacterError):
        render_glyph("?", RenderSpec(FONT), 0)
    with pytest.raises(MissingGlyphError):
        # NanumGothic subset carries only Hangul
        render_glyph("A", RenderSpec("NanumGothic.ttf"), 0)


@pytest.mark.parametrize("ch", list("AgjQ0W"))
def test_ink_stays_inside_canvas(ch):
    spec = RenderSpec(FONT, rotation=25, translate=10)
    for seed in range(5):
        px = render_glyph(ch, spec, seed).pixels
        assert px.min() >= 0 and px.max() <= 1
        border = np.concatenate([px[0], px[-1], px[:, 0], px[:, -1]])
        assert border.min() == pytest.approx(1.0)


def test_render_spec_bounds():
    with pytest.raises(ValueError):
        RenderSpec(FONT, rotation=30)
    with pytest.raises(ValueError):
        RenderSpec(FONT, noise_sigma=-1)


def test_case_pairs_keep_size_difference():
    spec = RenderSpec(FONT)
    small = 1 - render_glyph("o", spec, 0).pixels
    big = 1 - render_glyph("O", spec, 0).pixels
    assert big.sum() > small.sum() * 1.2


def test_dataset_split_arithmetic():
    train, val = build_glyph_dataset([FONT], per_char_count=10, split=0.8, seed=0)
    assert len(train) == 496 and len(val) == 124
    for cls in CLASSES[:62]:
        assert sum(g.label == cls for g in train) == 8
        assert sum(g.label == cls for g in val) == 2
    ids = [g.label.class_id for g in train]
    assert ids == sorted(ids)


def test_dataset_garbage_lands_in_validation():
    garbage = render_garbage_images(50, seed=0)
    _, val = build_glyph_dataset([FONT], per_char_count=2, garbage_sources=garbage, split=0.5, seed=0)
    assert sum(g.label == GARBAGE for g in val) >= 1
    assert all(0 <= g.label.class_id < 63 for g in val)


def test_dataset_is_seed_deterministic():
    a, _ = build_glyph_dataset([FONT], per_char_count=2, split=0.5, seed=3)
    b, _ = build_glyph_dataset([FONT], per_char_count=2, split=0.5, seed=3)
    assert all(np.array_equal(x.pixels, y.pixels) for x, y in zip(a, b))


def test_dataset_insufficient_data():
    with pytest.raises(InsufficientDataError):
        build_glyph_dataset([FONT], per_char_count=1, split=0.5, seed=0)


def test_garbage_images_are_labeled():
    imgs = render_garbage_images(12, seed=1, blob_fraction=0.25)
    assert len(imgs) == 12
    assert all(g.label == GARBAGE and g.source == "garbage" for g in imgs)


def _write(path, size=(20, 30), mode="L"):
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.new(mode, size, 128 if mode == "L" else (128, 128, 128)).save(path)


def test_load_external_layout(tmp_path):
    for k in range(3):
        _write(tmp_path / "lower_a" / f"{k}.png")
    _write(tmp_path / "hebrew_alef" / "x.pgm")
    _write(tmp_path / "Sample011" / "y.png", mode="RGB")  # Chars74K uppercase A
    (tmp_path / "lower_a" / "notes.txt").write_text("ignored")
    images = load_external_images(tmp_path)
    labels = [g.label.value for g in images]
    assert labels.count("a") == 3
    assert labels.count("A") == 1
    assert labels.count("GARBAGE") == 1
    assert all(g.pixels.shape == (64, 64) for g in images)
    assert all(abs(float(g.pixels.mean()) - 128 / 255) < 1e-6 for g in images)


def test_load_external_skips_unreadable(tmp_path):
    _write(tmp_path / "digit_7" / "ok.png")
    (tmp_path / "digit_7" / "bad.png").write_bytes(b"not an image")
    with pytest.warns(UserWarning, match="skipped 1"):
        images = load_external_images(tmp_path)
    assert len(images) == 1 and images[0].label.value == "7"


def test_load_external_empty_root(tmp_path):
    with pytest.raises(EmptyRootError):
        load_external_images(tmp_path)
