"""Acceptance gate: one test per criterion, each recording a PASS/FAIL line.

The desk-scale glyph classifier and table are built once per module and shared
by criteria 3, 4, 7 and 9. Expect the whole module to take well over half an
hour on a single CPU core; criterion 7 dominates.
"""

import json
import time
from dataclasses import replace

import numpy as np
import pytest
import torch

from oracles import random_pairs, recursive_distance
from postocr.cli import main, pipeline_smoke
from postocr.corpus import CorrectionPair, NoiseConfig, sample_sentences, synthesize_noise
from postocr.correction_model import (
    CorrectionModelConfig,
    Corrector,
    ModelCheckpoint,
    build_model,
    greedy_decode,
    make_batch,
    run_glyph_ablation,
    teacher_forced_loss,
    train_correction_model,
)
from postocr.glyph_embedding import (
    GlyphClassifierConfig,
    GlyphEmbeddingTable,
    build_embedding_table,
    confusion_matrix,
    separation_score,
    train_glyph_classifier,
)
from postocr.glyphset import build_glyph_dataset, bundled_fonts, render_garbage_images
from postocr.lm_baseline import CorrectorEndpointConfig, MockConfig, MockLMServer, run_baseline_eval
from postocr.metrics import align, cer, cer_standard, evaluate_corpus
from postocr.text import ALPHANUMERICS

# desk-scale glyph run
GLYPH_FONTS = 4
GLYPH_PER_CHAR = 40
GLYPH_GARBAGE = 1200
GLYPH_CONFIG = GlyphClassifierConfig(epochs=5, seed=0)

# glyph ablation run
ABLATION_PAIRS = 5000
ABLATION_SPLIT = (4000, 200, 800)  # train / val / test
ABLATION_NOISE = NoiseConfig(p_sub=0.15, p_del=0.02, p_ins=0.02, temperature=0.05, seed=1)
ABLATION_MODEL = CorrectionModelConfig(
    d_glyph=768, d_model=96, enc_width=96, dropout=0.0, batch_size=32, steps=2600, learning_rate=2e-3,
    warmup_steps=50, log_every=1300, val_limit=100, max_len=64,
)

# memorization run
OVERFIT_MODEL = CorrectionModelConfig(
    d_char=32, enc_layers=2, enc_width=64, d_model=64, dec_layers=2, dec_heads=4, dropout=0.0,
    learning_rate=3e-3, warmup_steps=20, batch_size=32, steps=300, log_every=100, val_limit=32, max_len=48,
)


@pytest.fixture(scope="module")
def desk_glyph():
    start = time.perf_counter()
    garbage = render_garbage_images(GLYPH_GARBAGE, seed=7, scripts=("hebrew", "hangul"))
    train, val = build_glyph_dataset(bundled_fonts(GLYPH_FONTS), GLYPH_PER_CHAR, garbage, split=0.8, seed=0)
    model, report = train_glyph_classifier(train, val, GLYPH_CONFIG)
    elapsed = time.perf_counter() - start
    table = build_embedding_table(model, train, {"partition": "train"})
    return {"model": model, "report": report, "train": train, "val": val, "seconds": elapsed, "table": table}


@pytest.fixture(scope="module")
def overfit_run(desk_glyph):
    table = desk_glyph["table"]
    texts = sample_sentences(32, seed=7, max_words=3)
    pairs = synthesize_noise(texts, confusion_matrix(table, 0.05), NoiseConfig(seed=7))
    cfg = replace(OVERFIT_MODEL, d_glyph=table.dim)
    start = time.perf_counter()
    ckpt, report = train_correction_model(pairs, pairs, table, cfg)
    return {"ckpt": ckpt, "report": report, "pairs": pairs, "seconds": time.perf_counter() - start, "table": table}


def test_c01_metrics_match_recursive_oracle(criterion):
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    bad = 0
    for ref, hyp in random_pairs(rng, 1000):
        c = align(ref, hyp)
        ok = (
            c.s + c.d + c.c == len(ref)
            and c.s + c.i + c.c == len(hyp)
            and c.s + c.d + c.i == recursive_distance(ref, hyp)
        )
        bad += not ok
    elapsed = time.perf_counter() - start
    criterion(1, bad == 0 and elapsed < 10, f"{1000 - bad}/1000 pairs agree, {elapsed:.2f}s (limit 10s)")


def test_c02_kitten_sitting(criterion):
    c = align("kitten", "sitting")
    ratio, standard = cer(c), cer_standard(c)
    ok = abs(ratio - 3 / 7) <= 1e-12 and abs(standard - 0.5) <= 1e-12
    criterion(2, ok, f"cer_paper={ratio!r} (3/7), cer_standard={standard!r} (0.5)")


def test_c03_glyph_classifier(criterion, desk_glyph):
    r = desk_glyph["report"]
    ok = r.val_accuracy >= 0.90 and r.garbage_recall >= 0.80 and desk_glyph["seconds"] <= 15 * 60
    criterion(
        3,
        ok,
        f"accuracy={r.val_accuracy:.4f} (>=0.90), garbage_recall={r.garbage_recall:.4f} (>=0.80), "
        f"{desk_glyph['seconds']:.0f}s on {torch.get_num_threads()} thread(s) (limit 900s)",
    )


def test_c04_embedding_separation(criterion, desk_glyph):
    score = separation_score(desk_glyph["model"], desk_glyph["val"])
    criterion(4, score >= 0.2, f"intra-minus-inter cosine={score:.4f} on held-out renders (>=0.2)")


def test_c05_gradient_check(criterion):
    rng = np.random.default_rng(5)
    table = GlyphEmbeddingTable.from_matrix(rng.normal(size=(62, 8)))
    cfg = CorrectionModelConfig(
        d_char=8, d_glyph=8, enc_layers=1, enc_kernel=3, enc_width=8, d_model=8, dec_layers=1, dec_heads=2,
        dropout=0.0, max_len=16, seed=5,
    )
    start = time.perf_counter()
    model = build_model(cfg, table).double().train()
    batch = make_batch([("teh cat", "the cat"), ("0ld", "old"), ("rn a", "m a")])
    model.zero_grad()
    model.loss(*batch).backward()
    params = [(n, p) for n, p in model.named_parameters() if p.requires_grad]
    sizes = np.array([p.numel() for _, p in params])
    picks = rng.choice(sizes.sum(), size=100, replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    eps, worst = 1e-6, 0.0
    with torch.no_grad():
        for flat in picks:
            k = int(np.searchsorted(offsets, flat, side="right") - 1)
            p = params[k][1].view(-1)
            j = int(flat - offsets[k])
            analytic = params[k][1].grad.view(-1)[j].item()
            orig = p[j].item()
            p[j] = orig + eps
            up = model.loss(*batch).item()
            p[j] = orig - eps
            down = model.loss(*batch).item()
            p[j] = orig
            numeric = (up - down) / (2 * eps)
            rel = abs(analytic - numeric) / max(abs(analytic) + abs(numeric), 1e-8)
            worst = max(worst, rel)
    elapsed = time.perf_counter() - start
    criterion(5, worst <= 1e-3 and elapsed < 120, f"max relative error={worst:.2e} over 100 parameters, {elapsed:.1f}s")


def test_c06_overfit(criterion, overfit_run):
    pairs, ckpt = overfit_run["pairs"], overfit_run["ckpt"]
    model = ckpt.build(overfit_run["table"])
    loss = teacher_forced_loss(model, pairs)
    hyps = greedy_decode(model, [p.ocr_text for p in pairs])
    exact = sum(h == p.gt_text for h, p in zip(hyps, pairs))
    ok = loss <= 0.05 and exact == 32 and overfit_run["seconds"] <= 600
    criterion(
        6,
        ok,
        f"loss={loss:.4f} (<=0.05), exact={exact}/32, steps={OVERFIT_MODEL.steps}, {overfit_run['seconds']:.0f}s",
    )


def test_c07_glyph_ablation(criterion, desk_glyph):
    table = desk_glyph["table"]
    texts = sample_sentences(ABLATION_PAIRS, seed=1, max_words=4)
    pairs = synthesize_noise(texts, confusion_matrix(table, ABLATION_NOISE.temperature), ABLATION_NOISE)
    n_train, n_val, _ = ABLATION_SPLIT
    train, val, test = pairs[:n_train], pairs[n_train : n_train + n_val], pairs[n_train + n_val :]
    start = time.perf_counter()
    report = run_glyph_ablation(train, val, test, table, replace(ABLATION_MODEL, d_glyph=table.dim), seeds=(0, 1, 2))
    elapsed = time.perf_counter() - start
    raw = evaluate_corpus([(p.ocr_text, p.gt_text) for p in test])
    print("\n" + report.table())
    print(f"uncorrected test input: WER {raw.wer_standard:.4f} CER {raw.cer_paper:.4f}")
    cer_gain, wer_gain = report.relative_reduction("cer_paper"), report.relative_reduction("wer_standard")
    ok = cer_gain >= 0.10 and wer_gain >= 0.10 and elapsed <= 30 * 60
    criterion(
        7,
        ok,
        f"relative CER reduction={cer_gain:.3f}, WER reduction={wer_gain:.3f} (both >=0.10), {elapsed:.0f}s (limit 1800s)",
    )


def test_c08_noise_distribution(criterion):
    rng = np.random.default_rng(8)
    logits = rng.normal(size=(62, 62))
    np.fill_diagonal(logits, -np.inf)
    confusion = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
    src = "e"
    texts = [src * 100] * 1000
    noisy = synthesize_noise(texts, confusion, NoiseConfig(p_sub=1.0, p_del=0.0, p_ins=0.0, seed=8))
    drawn = "".join(p.ocr_text for p in noisy)
    counts = np.array([drawn.count(ch) for ch in ALPHANUMERICS], dtype=float)
    tv = 0.5 * np.abs(counts / counts.sum() - confusion[ALPHANUMERICS.index(src)]).sum()
    criterion(8, len(drawn) == 100_000 and tv <= 0.02, f"{len(drawn)} substitutions, total variation={tv:.4f} (<=0.02)")


def test_c09_round_trips(criterion, overfit_run, tmp_path):
    table, ckpt, pairs = overfit_run["table"], overfit_run["ckpt"], overfit_run["pairs"]
    table.save(tmp_path / "table.json")
    table2 = GlyphEmbeddingTable.load(tmp_path / "table.json")
    ckpt.save(tmp_path / "ckpt.bin")
    ckpt2 = ModelCheckpoint.load(tmp_path / "ckpt.bin")
    probe = [p.ocr_text for p in pairs]
    same_text = Corrector(ckpt, table).correct_batch(probe) == Corrector(ckpt2, table2).correct_batch(probe)
    batch = make_batch([(p.ocr_text, p.gt_text) for p in pairs])
    with torch.no_grad():
        same_logits = torch.equal(ckpt.build(table)(*batch[:2]), ckpt2.build(table2)(*batch[:2]))
    side = GlyphEmbeddingTable.from_sidecar(table.to_sidecar())
    sidecar_ok = np.array_equal(side.matrix(), table.matrix().astype(np.float32).astype(np.float64))
    max_dev = float(np.abs(side.matrix() - table.matrix()).max())
    ok = same_text and same_logits and table2.fingerprint == table.fingerprint and sidecar_ok
    criterion(
        9,
        ok,
        f"checkpoint outputs identical={same_text and same_logits}, table fingerprint kept="
        f"{table2.fingerprint == table.fingerprint}, sidecar max deviation={max_dev:.1e} (float32 rounding)",
    )


def test_c10_end_to_end_determinism(criterion, tmp_path, monkeypatch):
    first = pipeline_smoke(tmp_path / "a", seed=3)
    second = pipeline_smoke(tmp_path / "b", seed=3)
    identical = (tmp_path / "a" / "report.json").read_bytes() == (tmp_path / "b" / "report.json").read_bytes()

    pairs = [CorrectionPair(l.split("\t")[0], l.split("\t")[1]) for l in (tmp_path / "a" / "test.tsv").read_text().splitlines()]
    monkeypatch.setenv("POSTOCR_LM_TOKEN", "acceptance")
    with MockLMServer(MockConfig("identity")) as server:
        base = run_baseline_eval(pairs, CorrectorEndpointConfig(base_url=server.base_url, timeout=10))
    raw = evaluate_corpus([(p.ocr_text, p.gt_text) for p in pairs], word_level=True)
    base_dict = base.to_dict()
    failures = base_dict.pop("failure_count")
    mock_equal = base_dict == raw.to_dict() and failures == 0
    criterion(
        10,
        identical and mock_equal and first == second,
        f"smoke reports byte-identical={identical}, identity-mock baseline equals raw eval={mock_equal}",
    )
