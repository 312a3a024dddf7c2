"""Edit-distance alignment and the two CER flavours, on a few hand-picked pairs.

    python demos/01_metrics_walkthrough.py
"""

from postocr.metrics import align, cer, cer_standard, evaluate_corpus, wer

pairs = [
    ("kitten", "sitting"),
    ("ab", "ba"),
    ("the quick brown fox", "teh quick brwn fox"),
    ("", ""),
]

# align() counts substitutions, deletions, insertions and matches of one
# minimal alignment. Ties prefer match, then substitution, deletion, insertion.
for ref, hyp in pairs:
    c = align(ref, hyp)
    print(f"{ref!r:24} -> {hyp!r:24} s={c.s} d={c.d} i={c.i} c={c.c}")
    # cer() divides by errors + matches, cer_standard() by the reference length
    if ref:
        print(f"    cer={cer(c):.4f} cer_standard={cer_standard(c):.4f}")

# Word-level error rate uses the same alignment over whitespace tokens.
print("WER:", wer("the quick brown fox", "teh quick brwn fox"))

# Corpus scores pool the counts before dividing (micro-average), so a long
# line weighs more than a short one.
report = evaluate_corpus(
    [("teh cat", "the cat"), ("sat on the mat", "sat on the mat")],
    word_level=True,
)
print(report.to_json())
