"""Labeled character images: font rendering, external datasets, garbage samples.

Images are ink-on-white grayscale arrays in [0, 1] (1.0 is background).
Rendering anchors every character on a shared baseline at a fixed point size,
so case pairs such as ``c``/``C`` or ``o``/``O`` keep their size difference.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, replace
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from fontTools.ttLib import TTFont
from PIL import Image, ImageDraw, ImageFont, UnidentifiedImageError

from .errors import (
    EmptyRootError,
    InsufficientDataError,
    MissingGlyphError,
    UnsupportedCharacterError,
)
from .text import ALPHANUMERICS, CHAR_TO_ID, DIGITS, LOWER, UPPER

logger = logging.getLogger(__name__)

CANVAS = 64
NUM_CLASSES = 63


@dataclass(frozen=True, order=True)
class CharClass:
    class_id: int
    value: str

    @property
    def is_garbage(self) -> bool:
        return self.class_id == GARBAGE.class_id


GARBAGE = CharClass(len(ALPHANUMERICS), "GARBAGE")
CLASSES = [CharClass(i, c) for i, c in enumerate(ALPHANUMERICS)] + [GARBAGE]


def char_class(ch: str) -> CharClass:
    if ch == GARBAGE.value:
        return GARBAGE
    try:
        return CLASSES[CHAR_TO_ID[ch]]
    except KeyError:
        raise UnsupportedCharacterError(f"unsupported character {ch!r}") from None


@dataclass(frozen=True)
class GlyphImage:
    pixels: np.ndarray
    label: CharClass
    source: str = "rendered"  # rendered | external | garbage


@dataclass(frozen=True)
class RenderSpec:
    """Font and augmentation ranges. All ranges are symmetric around zero."""

    font_id: str
    point_size: int = 40
    rotation: float = 0.0
    noise_sigma: float = 0.0
    translate: int = 0
    contrast: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        if not 0 <= self.rotation <= 25:
            raise ValueError("rotation bound must be within [0, 25] degrees")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        if self.translate < 0:
            raise ValueError("translate must be non-negative")
        lo, hi = self.contrast
        if not 0 < lo <= hi <= 1:
            raise ValueError("contrast range must satisfy 0 < lo <= hi <= 1")

    @property
    def augmented(self) -> bool:
        return bool(self.rotation or self.noise_sigma or self.translate or self.contrast[0] != self.contrast[1])


def default_augmentation(font_id: str) -> RenderSpec:
    return RenderSpec(font_id, point_size=40, rotation=10.0, noise_sigma=0.05, translate=3, contrast=(0.6, 1.0))


# -- fonts ---------------------------------------------------------------------

_FONT_DIR = resources.files("postocr") / "fonts"
LATIN_FONTS = ("DejaVuSans.ttf", "DejaVuSerif.ttf", "DejaVuSansMono.ttf", "STIXGeneral.ttf", "DejaVuSans-Bold.ttf")

HEBREW = "".join(chr(c) for c in range(0x5D0, 0x5EB))
# 19 initial consonants x 21 vowels, no final consonant
HANGUL = "".join(chr(0xAC00 + (i * 21 + m) * 28) for i in range(19) for m in range(21))
GARBAGE_SCRIPTS = {
    "hebrew": (HEBREW, ("DejaVuSans.ttf", "DejaVuSans-Bold.ttf")),
    "hangul": (HANGUL, ("NanumGothic.ttf", "NanumGothicBold.ttf")),
}


def font_path(name: str) -> str:
    """Resolve a bundled font name; anything else is treated as a file path."""
    bundled = _FONT_DIR / name
    if bundled.is_file():
        return str(bundled)
    return name


def bundled_fonts(count: int = 4) -> list[str]:
    return [font_path(name) for name in LATIN_FONTS[:count]]


@lru_cache(maxsize=None)
def _cmap(path: str) -> frozenset[int]:
    return frozenset(TTFont(path, lazy=True).getBestCmap())


@lru_cache(maxsize=None)
def _font(path: str, size: int) -> ImageFont.FreeTypeFont:
    return ImageFont.truetype(path, size)


def has_glyph(font_id: str, ch: str) -> bool:
    return ord(ch) in _cmap(font_path(font_id))


# -- rendering -----------------------------------------------------------------


def _rng(seed, *keys) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, keys)]))


def _ink_image(ch: str, spec: RenderSpec, canvas: int) -> np.ndarray:
    """Ink mask (1.0 = full ink) on a 2x canvas, baseline at 70% of the inner canvas."""
    path = font_path(spec.font_id)
    if ord(ch) not in _cmap(path):
        raise MissingGlyphError(f"font {Path(path).name} has no glyph for {ch!r}")
    big = 2 * canvas
    img = Image.new("L", (big, big), 0)
    draw = ImageDraw.Draw(img)
    offset = canvas // 2
    baseline = offset + int(round(canvas * 0.70))
    draw.text((big // 2, baseline), ch, font=_font(path, spec.point_size), fill=255, anchor="ms")
    return img


def _place(img: Image.Image, spec: RenderSpec, rng: np.random.Generator, canvas: int) -> np.ndarray:
    big = img.size[0]
    angle = rng.uniform(-spec.rotation, spec.rotation) if spec.rotation else 0.0
    if angle:
        img = img.rotate(angle, resample=Image.BILINEAR, fillcolor=0)
    ink = np.asarray(img, dtype=np.float32) / 255.0
    dx, dy = (rng.integers(-spec.translate, spec.translate + 1, size=2) if spec.translate else (0, 0))
    lo = canvas // 2
    rows = np.nonzero(ink.max(axis=1) > 0)[0]
    cols = np.nonzero(ink.max(axis=0) > 0)[0]
    if rows.size:
        # clamp the shift so that all ink stays at least one pixel inside the crop
        dy = int(np.clip(dy, lo + 1 - rows[0], lo + canvas - 2 - rows[-1]))
        dx = int(np.clip(dx, lo + 1 - cols[0], lo + canvas - 2 - cols[-1]))
    top, left = lo - dy, lo - dx
    crop = ink[top : top + canvas, left : left + canvas]
    if rows.size and crop.sum() < ink.sum() - 1e-3:
        # glyph larger than the canvas: fall back to scaling it down
        crop = np.asarray(Image.fromarray((ink * 255).astype(np.uint8)).resize((canvas, canvas), Image.BILINEAR), dtype=np.float32) / 255.0
    return crop


def _finish(ink: np.ndarray, spec: RenderSpec, rng: np.random.Generator) -> np.ndarray:
    lo, hi = spec.contrast
    strength = rng.uniform(lo, hi) if hi > lo else hi
    pixels = 1.0 - strength * ink
    if spec.noise_sigma:
        pixels = pixels + rng.normal(0.0, spec.noise_sigma, size=pixels.shape)
    return np.clip(pixels, 0.0, 1.0).astype(np.float32)


def _render_any(ch: str, spec: RenderSpec, seed: int, canvas: int) -> np.ndarray:
    rng = _rng(seed, ord(ch))
    ink = _place(_ink_image(ch, spec, canvas), spec, rng, canvas)
    return _finish(ink, spec, rng)


def render_glyph(ch: str, spec: RenderSpec, seed: int, canvas: int = CANVAS) -> GlyphImage:
    """Render one of the 62 alphanumerics; deterministic in ``(ch, spec, seed)``."""
    label = char_class(ch)
    if label.is_garbage:
        raise UnsupportedCharacterError("render_garbage renders garbage samples")
    return GlyphImage(_render_any(ch, spec, seed, canvas), label, "rendered")


def render_garbage(ch: str, spec: RenderSpec, seed: int, canvas: int = CANVAS) -> GlyphImage:
    """Render an arbitrary (non-alphanumeric) codepoint as a GARBAGE sample."""
    if ch in CHAR_TO_ID:
        raise UnsupportedCharacterError(f"{ch!r} is a real class, not garbage")
    return GlyphImage(_render_any(ch, spec, seed, canvas), GARBAGE, "garbage")


def random_blob(seed: int, canvas: int = CANVAS, noise_sigma: float = 0.05) -> GlyphImage:
    """Random stroke scribble, used as an extra garbage source."""
    rng = _rng(seed, 0xB10B)
    img = Image.new("L", (canvas, canvas), 0)
    draw = ImageDraw.Draw(img)
    margin = canvas // 6
    for _ in range(rng.integers(3, 7)):
        pts = [tuple(rng.integers(margin, canvas - margin, size=2).tolist()) for _ in range(3)]
        draw.line(pts, fill=255, width=int(rng.integers(2, 6)))
    ink = np.asarray(img, dtype=np.float32) / 255.0
    pixels = np.clip(1.0 - ink + rng.normal(0, noise_sigma, ink.shape), 0, 1)
    return GlyphImage(pixels.astype(np.float32), GARBAGE, "garbage")


def render_garbage_images(
    count: int,
    seed: int,
    scripts: Sequence[str] = ("hebrew", "hangul"),
    blob_fraction: float = 0.0,
    augment: bool = True,
    canvas: int = CANVAS,
) -> list[GlyphImage]:
    """Garbage samples cycled over the requested scripts (and optional blobs)."""
    rng = _rng(seed, 0x6A6)
    n_blobs = int(round(count * blob_fraction))
    out = []
    for k in range(count - n_blobs):
        chars, fonts = GARBAGE_SCRIPTS[scripts[k % len(scripts)]]
        ch = chars[rng.integers(len(chars))]
        font = fonts[rng.integers(len(fonts))]
        spec = default_augmentation(font) if augment else RenderSpec(font)
        out.append(render_garbage(ch, spec, int(rng.integers(2**31)), canvas))
    out.extend(random_blob(int(rng.integers(2**31)), canvas) for _ in range(n_blobs))
    return out


# -- datasets ------------------------------------------------------------------


def stratified_split(
    images: Sequence[GlyphImage], split: float, seed: int
) -> tuple[list[GlyphImage], list[GlyphImage]]:
    """Per-class shuffled split; output sorted by class id then original index."""
    if not 0 < split < 1:
        raise ValueError("split must lie in (0, 1)")
    by_class: dict[int, list[int]] = {}
    for idx, img in enumerate(images):
        by_class.setdefault(img.label.class_id, []).append(idx)
    train_idx, val_idx = [], []
    for cid in sorted(by_class):
        idx = np.array(by_class[cid])
        n_train = int(round(len(idx) * split))
        if n_train < 1 or n_train >= len(idx):
            name = CLASSES[cid].value
            raise InsufficientDataError(f"class {name!r} with {len(idx)} images cannot fill both partitions")
        perm = _rng(seed, cid).permutation(len(idx))
        train_idx.extend(sorted(idx[perm[:n_train]].tolist()))
        val_idx.extend(sorted(idx[perm[n_train:]].tolist()))
    return [images[i] for i in train_idx], [images[i] for i in val_idx]


def build_glyph_dataset(
    fonts: Sequence[str],
    per_char_count: int,
    garbage_sources: Iterable[GlyphImage | np.ndarray] = (),
    split: float = 0.8,
    seed: int = 0,
    spec: RenderSpec | None = None,
    canvas: int = CANVAS,
) -> tuple[list[GlyphImage], list[GlyphImage]]:
    """Render ``per_char_count`` augmented images per font and character, then split.

    ``garbage_sources`` items are relabeled GARBAGE; raw arrays are accepted.
    """
    if not fonts:
        raise InsufficientDataError("at least one font is required")
    if per_char_count < 1:
        raise InsufficientDataError("per_char_count must be >= 1")
    if not 0 < split < 1:
        raise ValueError("split must lie in (0, 1)")
    images = []
    for ch in ALPHANUMERICS:
        for f_idx, font in enumerate(fonts):
            font_spec = replace(spec, font_id=font) if spec else default_augmentation(font)
            for k in range(per_char_count):
                images.append(render_glyph(ch, font_spec, item_seed(seed, f_idx, k), canvas))
    for item in garbage_sources:
        if isinstance(item, GlyphImage):
            images.append(replace(item, label=GARBAGE, source="garbage"))
        else:
            images.append(GlyphImage(np.asarray(item, dtype=np.float32), GARBAGE, "garbage"))
    return stratified_split(images, split, seed)


def item_seed(seed: int, font_idx: int, k: int) -> int:
    return int(_rng(seed, font_idx, k).integers(2**31))


# -- external directory layout -------------------------------------------------


def class_name_map() -> dict[str, str]:
    """Directory names accepted by :func:`load_external_images`.

    ``digit_0``..``digit_9``, ``lower_a``..``lower_z``, ``upper_A``..``upper_Z``
    and the Chars74K English folders ``Sample001``..``Sample062``
    (digits, then uppercase, then lowercase). Anything else is GARBAGE.
    """
    names = {f"digit_{c}": c for c in DIGITS}
    names.update({f"lower_{c}": c for c in LOWER})
    names.update({f"upper_{c}": c for c in UPPER})
    for k, c in enumerate(DIGITS + UPPER + LOWER, start=1):
        names[f"Sample{k:03d}"] = c
    return names


IMAGE_SUFFIXES = {".png", ".pgm"}


def load_external_images(root: str | Path, canvas: int = CANVAS) -> list[GlyphImage]:
    """Load ``<root>/<class_name>/<image>`` files, resized to the canvas.

    Unreadable files are skipped; a single ``UserWarning`` reports how many.
    """
    root = Path(root)
    subdirs = sorted(p for p in root.iterdir() if p.is_dir()) if root.is_dir() else []
    if not subdirs:
        raise EmptyRootError(f"no class directories under {root}")
    names = class_name_map()
    out, skipped = [], 0
    for sub in subdirs:
        label = char_class(names[sub.name]) if sub.name in names else GARBAGE
        for path in sorted(sub.iterdir()):
            if path.suffix.lower() not in IMAGE_SUFFIXES:
                continue
            try:
                with Image.open(path) as im:
                    gray = im.convert("L").resize((canvas, canvas), Image.BILINEAR)
            except (UnidentifiedImageError, OSError):
                skipped += 1
                continue
            pixels = np.asarray(gray, dtype=np.float32) / 255.0
            out.append(GlyphImage(pixels, label, "external"))
    if skipped:
        warnings.warn(f"skipped {skipped} unreadable image(s) under {root}", stacklevel=2)
    out.sort(key=lambda g: g.label.class_id)
    return out


def to_array(images: Sequence[GlyphImage]) -> tuple[np.ndarray, np.ndarray]:
    """Stack images into ``(N, H, W)`` float32 pixels and ``(N,)`` int64 labels."""
    x = np.stack([g.pixels for g in images]).astype(np.float32)
    y = np.array([g.label.class_id for g in images], dtype=np.int64)
    return x, y
