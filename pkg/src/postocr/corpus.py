"""OCR/ground-truth pairs: file ingestion, normalization, synthetic noise.

Pair files are UTF-8 TSV, ``ocr_text<TAB>gt_text[<TAB>source_id]``, one pair
per line, no header.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence, TextIO

import numpy as np

from .errors import InvalidMatrixError, MalformedLineError, FormatError
from .text import ALPHANUMERICS, CHAR_TO_ID, normalize

logger = logging.getLogger(__name__)

__all__ = [
    "CorrectionPair",
    "NoiseConfig",
    "normalize",
    "load_pairs",
    "read_pairs",
    "write_pairs",
    "synthesize_noise",
    "sample_sentences",
]


@dataclass(frozen=True)
class CorrectionPair:
    ocr_text: str
    gt_text: str
    source_id: str | None = None

    def __post_init__(self):
        if not self.gt_text:
            raise ValueError("gt_text must be non-empty")
        for text in (self.ocr_text, self.gt_text):
            if normalize(text) != text:
                raise ValueError(f"text is not normalized: {text!r}")


@dataclass(frozen=True)
class NoiseConfig:
    p_sub: float = 0.15
    p_del: float = 0.02
    p_ins: float = 0.02
    temperature: float = 0.05
    seed: int = 0

    def __post_init__(self):
        for name in ("p_sub", "p_del", "p_ins"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.p_sub + self.p_del > 1:
            raise ValueError("p_sub + p_del must not exceed 1")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")


def read_pairs(path: str | Path) -> tuple[list[CorrectionPair], int]:
    """Parse a pair file; returns the pairs and the number of skipped lines.

    Lines whose ground truth normalizes to the empty string are skipped.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"pair file not found: {path}")
    pairs, skipped = [], 0
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"{path} is not valid UTF-8") from exc
    for lineno, line in enumerate(text.split("\n"), start=1):
        if not line:
            continue
        cols = line.split("\t")
        if len(cols) not in (2, 3):
            raise MalformedLineError(path, lineno, f"expected 2 or 3 tab-separated columns, got {len(cols)}")
        ocr, gt = normalize(cols[0]), normalize(cols[1])
        if not gt:
            skipped += 1
            continue
        pairs.append(CorrectionPair(ocr, gt, cols[2] if len(cols) == 3 else None))
    return pairs, skipped


def load_pairs(path: str | Path) -> list[CorrectionPair]:
    pairs, skipped = read_pairs(path)
    if skipped:
        logger.warning("%s: skipped %d line(s) with empty ground truth", path, skipped)
    return pairs


def write_pairs(pairs: Iterable[CorrectionPair], out: str | Path | TextIO) -> None:
    lines = []
    for p in pairs:
        cols = [p.ocr_text, p.gt_text] + ([p.source_id] if p.source_id is not None else [])
        lines.append("\t".join(cols) + "\n")
    if isinstance(out, (str, Path)):
        Path(out).write_text("".join(lines), encoding="utf-8")
    else:
        out.write("".join(lines))


def _check_confusion(confusion: np.ndarray) -> np.ndarray:
    m = np.asarray(confusion, dtype=np.float64)
    n = len(ALPHANUMERICS)
    if m.shape != (n, n):
        raise InvalidMatrixError(f"confusion matrix must be {n}x{n}, got {m.shape}")
    if not np.isfinite(m).all() or (m < 0).any():
        raise InvalidMatrixError("confusion matrix must be finite and non-negative")
    if np.abs(m.sum(axis=1) - 1).max() > 1e-6:
        raise InvalidMatrixError("confusion matrix rows must sum to 1")
    return m


def _noisy(text: str, cdf: np.ndarray, cfg: NoiseConfig, rng: np.random.Generator) -> str:
    def draw(src: int) -> str:
        k = int(np.searchsorted(cdf[src], rng.random(), side="right"))
        return ALPHANUMERICS[min(k, len(ALPHANUMERICS) - 1)]

    words = []
    for word in text.split(" "):
        out: list[str] = []
        for pos, ch in enumerate(word):
            src = CHAR_TO_ID[ch]
            r = rng.random()
            last_chance = pos == len(word) - 1 and not out
            if r < cfg.p_del and not last_chance:
                pass
            elif r < cfg.p_del + cfg.p_sub:
                out.append(draw(src))
            else:
                out.append(ch)
            if rng.random() < cfg.p_ins:
                out.append(draw(src))
        words.append("".join(out))
    return " ".join(words)


def synthesize_noise(
    clean_texts: Sequence[str],
    confusion: np.ndarray,
    config: NoiseConfig,
) -> list[CorrectionPair]:
    """Corrupt each normalized text with confusion-driven character noise.

    Per non-space character: delete with ``p_del``, else substitute with
    ``p_sub`` by sampling the character's confusion row; then, with ``p_ins``,
    insert a character sampled from the same row after it. Spaces are never
    touched, and a word's last surviving character is never deleted, so word
    counts are preserved. Each text draws from its own generator seeded by
    ``(seed, index)``.
    """
    cdf = np.cumsum(_check_confusion(confusion), axis=1)
    pairs = []
    for idx, text in enumerate(clean_texts):
        if normalize(text) != text or not text:
            raise ValueError(f"text #{idx} is empty or not normalized: {text!r}")
        rng = np.random.default_rng([config.seed, idx])
        pairs.append(CorrectionPair(_noisy(text, cdf, config, rng), text, f"synthetic-{idx}"))
    return pairs


@lru_cache(maxsize=1)
def word_list() -> tuple[str, ...]:
    raw = (resources.files("postocr") / "data" / "words.txt").read_text()
    return tuple(dict.fromkeys(raw.split()))


def sample_sentences(
    n: int,
    seed: int,
    min_words: int = 1,
    max_words: int = 5,
    vocab: Sequence[str] | None = None,
) -> list[str]:
    """Clean sentences from the bundled word list.

    The first word is capitalized; about one word in twelve is upper-cased and
    one in ten is replaced by a 1-4 digit number, so all 62 characters occur.
    """
    vocab = list(vocab or word_list())
    rng = np.random.default_rng([seed, 0x5E7])
    out = []
    for _ in range(n):
        words = []
        for k in range(int(rng.integers(min_words, max_words + 1))):
            r = rng.random()
            if r < 0.10:
                w = str(int(rng.integers(0, 10 ** int(rng.integers(1, 5)))))
            else:
                w = vocab[int(rng.integers(len(vocab)))]
                if r < 0.18:
                    w = w.upper()
                elif k == 0:
                    w = w.capitalize()
            words.append(w)
        out.append(" ".join(words))
    return out
