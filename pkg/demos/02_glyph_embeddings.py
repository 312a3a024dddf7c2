"""Train a small open-set glyph classifier and look at the embedding table it yields.

Takes a minute or two on one CPU core. The full-size run is the acceptance
test; this one uses three fonts and fewer renders.

    python demos/02_glyph_embeddings.py
"""

import logging

import numpy as np

from postocr.glyph_embedding import (
    GlyphClassifierConfig,
    build_embedding_table,
    classify_open_set,
    confusion_matrix,
    cosine_matrix,
    separation_score,
    train_glyph_classifier,
)
from postocr.glyphset import (
    RenderSpec,
    build_glyph_dataset,
    bundled_fonts,
    render_garbage_images,
    render_glyph,
)
from postocr.text import ALPHANUMERICS

logging.basicConfig(level=logging.INFO, format="%(message)s")

# Renders of the 62 alphanumerics plus a garbage class drawn from Hebrew and
# Hangul letters, which the classifier must learn to reject.
garbage = render_garbage_images(400, seed=1)
train, val = build_glyph_dataset(bundled_fonts(3), per_char_count=20, garbage_sources=garbage, seed=0)
print(f"{len(train)} training and {len(val)} held-out images")

config = GlyphClassifierConfig(embed_dim=128, epochs=6, seed=0)
model, report = train_glyph_classifier(train, val, config)
print(f"held-out accuracy {report.val_accuracy:.3f}, garbage recall {report.garbage_recall:.3f}")
print(f"separation (intra minus inter cosine): {separation_score(model, val):.3f}")

# A clean render of a character the model has seen, and a Hangul syllable it
# should push into the garbage class.
print("clean 'Q':", classify_open_set(model, render_glyph("Q", RenderSpec(bundled_fonts(1)[0]), seed=0).pixels))
print("Hangul   :", classify_open_set(model, garbage[1].pixels))

# One averaged vector per character is the glyph embedding table.
table = build_embedding_table(model, train)
sims = cosine_matrix(table.matrix())
np.fill_diagonal(sims, -1)
for ch in "0OlI1S5":
    i = ALPHANUMERICS.index(ch)
    near = ALPHANUMERICS[int(sims[i].argmax())]
    print(f"nearest glyph to {ch!r}: {near!r} (cosine {sims[i].max():.3f})")

# The noise synthesizer turns these similarities into substitution odds.
conf = confusion_matrix(table, temperature=0.05)
row = conf[ALPHANUMERICS.index("0")]
top = np.argsort(-row)[:3]
print("when '0' is misread it becomes:", [(ALPHANUMERICS[j], round(float(row[j]), 3)) for j in top])
