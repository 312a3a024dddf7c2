"""Synthesize OCR-style noise and train a toy corrector on it.

About a minute on one core. At this size the corrector repairs many words
(WER drops) but garbles others badly enough that CER can rise; compare the
two metric lines it prints.

    python demos/03_noise_and_correction.py
"""

import logging

import numpy as np

from postocr.corpus import NoiseConfig, sample_sentences, synthesize_noise
from postocr.correction_model import CorrectionModelConfig, Corrector, train_correction_model
from postocr.glyph_embedding import GlyphEmbeddingTable, confusion_matrix
from postocr.metrics import evaluate_corpus
from postocr.text import ALPHANUMERICS

logging.basicConfig(level=logging.INFO, format="%(message)s")

# A stand-in table with a little structure: 'o'-like and 'l'-like characters
# share directions. A real one comes from demos/02 or `postocr glyph export-table`.
rng = np.random.default_rng(0)
base = rng.normal(size=(62, 32))
table_rows = base.copy()
for group in ("0oOQD", "1lIi", "5sS", "8B", "rn"):
    idx = [ALPHANUMERICS.index(c) for c in group]
    table_rows[idx] = base[idx[0]] + 0.3 * rng.normal(size=(len(idx), 32))
table = GlyphEmbeddingTable.from_matrix(table_rows, {"demo": True})

texts = sample_sentences(3000, seed=0, max_words=3)
pairs = synthesize_noise(texts, confusion_matrix(table, 0.1), NoiseConfig(p_sub=0.1, seed=0))
for p in pairs[:5]:
    print(f"{p.ocr_text!r:30} <- {p.gt_text!r}")

train, val, test = pairs[:2800], pairs[2800:2900], pairs[2900:]
config = CorrectionModelConfig(
    d_glyph=32, d_char=32, enc_width=64, d_model=64, enc_layers=2, steps=1500, batch_size=32, dropout=0.0,
    learning_rate=2e-3, warmup_steps=40, log_every=500, max_len=48,
)
ckpt, report = train_correction_model(train, val, table, config)

corrector = Corrector(ckpt, table)
hyps = corrector.correct_batch([p.ocr_text for p in test])
print("uncorrected:", evaluate_corpus([(p.ocr_text, p.gt_text) for p in test]).to_json())
print("corrected:  ", evaluate_corpus([(h, p.gt_text) for h, p in zip(hyps, test)]).to_json())
for h, p in list(zip(hyps, test))[:5]:
    print(f"{p.ocr_text!r:30} -> {h!r:30} (truth {p.gt_text!r})")
