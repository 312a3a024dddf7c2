"""Post-OCR text correction with visual glyph embeddings.

Submodules: ``metrics`` (CER/WER), ``glyphset`` (font-rendered glyph data),
``glyph_embedding`` (open-set classifier and the per-character table),
``corpus`` (pair files and synthetic noise), ``correction_model`` (the
corrector), ``lm_baseline`` (external chat-completion corrector) and ``cli``.
"""

from .corpus import CorrectionPair, NoiseConfig, load_pairs, synthesize_noise, write_pairs
from .errors import DataError, DivergenceError, LMError, PostOCRError
from .glyph_embedding import GlyphEmbeddingTable, confusion_matrix
from .metrics import EditCounts, MetricReport, align, cer, cer_standard, evaluate_corpus, wer
from .text import ALPHANUMERICS, normalize

__version__ = "0.1.0"

__all__ = [
    "ALPHANUMERICS",
    "CorrectionPair",
    "DataError",
    "DivergenceError",
    "EditCounts",
    "GlyphEmbeddingTable",
    "LMError",
    "MetricReport",
    "NoiseConfig",
    "PostOCRError",
    "align",
    "cer",
    "cer_standard",
    "confusion_matrix",
    "evaluate_corpus",
    "load_pairs",
    "normalize",
    "synthesize_noise",
    "wer",
    "write_pairs",
]
