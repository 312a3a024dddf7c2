import json

import numpy as np
import pytest
import torch

from postocr.errors import (
    DegenerateTableError,
    FormatError,
    MissingCharacterError,
    MissingGarbageDataError,
    ShapeMismatchError,
)
from postocr.glyph_embedding import (
    GlyphClassifierConfig,
    GlyphEmbeddingTable,
    build_classifier,
    build_embedding_table,
    classify_open_set,
    compare_open_set_variants,
    confusion_matrix,
    extract_embedding,
    load_classifier,
    predict_proba,
    save_classifier,
    train_glyph_classifier,
)
from postocr.glyphset import GARBAGE, build_glyph_dataset, bundled_fonts, render_garbage_images
from postocr.text import ALPHANUMERICS
from oracles import brute_nearest

TINY = GlyphClassifierConfig(widths=(4, 8), embed_dim=16, epochs=2, batch_size=32, seed=0)


@pytest.fixture(scope="module")
def tiny_data():
    garbage = render_garbage_images(8, seed=0)
    return build_glyph_dataset(bundled_fonts(1), per_char_count=2, garbage_sources=garbage, split=0.5, seed=0)


@pytest.fixture(scope="module")
def tiny_model(tiny_data):
    train, val = tiny_data
    return train_glyph_classifier(train, val, TINY)


def test_config_defaults_follow_two_layer_head():
    cfg = GlyphClassifierConfig()
    model = build_classifier(cfg)
    assert model.projection.in_features == 128 and model.projection.out_features == 768
    assert model.head.in_features == 768 and model.head.out_features == 63
    assert GlyphClassifierConfig(open_set_mode="threshold_softmax").num_classes == 62
    with pytest.raises(ValueError):
        GlyphClassifierConfig(embed_dim=0)
    with pytest.raises(ValueError):
        GlyphClassifierConfig(unfreeze_policy="last3")


def test_training_smoke(tiny_model):
    model, report = tiny_model
    assert len(report.epoch_losses) == 2
    assert all(np.isfinite(report.epoch_losses))
    assert 0 <= report.val_accuracy <= 1
    assert report.garbage_recall is not None


def test_training_is_deterministic(tiny_data, tiny_model):
    train, val = tiny_data
    again, _ = train_glyph_classifier(train, val, TINY)
    for (k, a), b in zip(tiny_model[0].state_dict().items(), again.state_dict().values()):
        assert torch.equal(a, b), k


def test_garbage_mode_needs_garbage(tiny_data):
    train, val = tiny_data
    clean = [g for g in train if g.label != GARBAGE]
    with pytest.raises(MissingGarbageDataError):
        train_glyph_classifier(clean, val, TINY)
    # threshold mode trains on the 62 real classes only
    model, _ = train_glyph_classifier(clean, val, GlyphClassifierConfig(**{**TINY.__dict__, "open_set_mode": "threshold_softmax", "epochs": 1}))
    assert model.head.out_features == 62


def test_unfreeze_policy_keeps_frozen_blocks(tiny_data, tiny_model):
    train, val = tiny_data
    base = tiny_model[0]
    cfg = GlyphClassifierConfig(**{**TINY.__dict__, "widths": (4, 8), "unfreeze_policy": "last2", "epochs": 1})
    tuned, _ = train_glyph_classifier(train, val, cfg, init=base)
    before, after = base.state_dict(), tuned.state_dict()
    for key in before:
        if key.startswith("blocks."):
            assert torch.equal(before[key], after[key]), key
    assert not torch.equal(before["head.weight"], after["head.weight"])


def test_unfreeze_last4_trains_last_two_blocks(tiny_data, tiny_model):
    train, val = tiny_data
    base = tiny_model[0]
    cfg = GlyphClassifierConfig(**{**TINY.__dict__, "widths": (4, 8, 8), "epochs": 1})
    deep, _ = train_glyph_classifier(train, val, cfg)
    tuned, _ = train_glyph_classifier(train, val, GlyphClassifierConfig(**{**cfg.__dict__, "unfreeze_policy": "last4"}), init=deep)
    before, after = deep.state_dict(), tuned.state_dict()
    assert torch.equal(before["blocks.0.0.weight"], after["blocks.0.0.weight"])
    assert not torch.equal(before["blocks.2.0.weight"], after["blocks.2.0.weight"])


def test_compare_variants_reports_all(tiny_data, tiny_model):
    train, val = tiny_data
    cfg = GlyphClassifierConfig(**{**TINY.__dict__, "epochs": 1})
    result = compare_open_set_variants(train, val, cfg, pretrained=tiny_model[0])
    assert set(result) == {"garbage_class/last2", "garbage_class/last4", "threshold_softmax/last4"}
    assert all(0 <= v <= 1 for v in result.values())


def test_probabilities_sum_to_one(tiny_model, tiny_data):
    probs = predict_proba(tiny_model[0], tiny_data[1])
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-6)


def test_threshold_one_rejects_everything(tiny_data):
    train, val = tiny_data
    cfg = GlyphClassifierConfig(**{**TINY.__dict__, "open_set_mode": "threshold_softmax", "reject_threshold": 1.0})
    model = build_classifier(cfg)
    for img in val[:5]:
        assert classify_open_set(model, img)[0] == GARBAGE


def test_uniform_logits_confidence():
    model = build_classifier(TINY)
    with torch.no_grad():
        model.head.weight.zero_()
        model.head.bias.zero_()
    label, conf = classify_open_set(model, np.ones((64, 64), np.float32))
    assert conf == pytest.approx(1 / 63)


def test_extract_embedding_shape_and_determinism(tiny_model, tiny_data):
    model = tiny_model[0]
    img = tiny_data[1][0]
    a = extract_embedding(model, img)
    assert a.shape == (16,)
    np.testing.assert_array_equal(a, extract_embedding(model, img))
    with pytest.raises(ShapeMismatchError):
        extract_embedding(model, np.zeros((32, 32)))


def test_table_from_single_images_equals_embeddings(tiny_model, tiny_data):
    model = tiny_model[0]
    one_each = {}
    for g in tiny_data[0]:
        if g.label != GARBAGE:
            one_each.setdefault(g.label.value, [g])
    table = build_embedding_table(model, one_each)
    for ch in "aZ5":
        np.testing.assert_array_equal(table.entries[ch], extract_embedding(model, one_each[ch][0]))
    dup = dict(one_each, x=[one_each["x"][0], one_each["x"][0]])
    np.testing.assert_allclose(build_embedding_table(model, dup).entries["x"], table.entries["x"], rtol=0, atol=1e-12)


def test_table_order_invariance_and_missing(tiny_model, tiny_data):
    model = tiny_model[0]
    imgs = list(tiny_data[0])
    t1 = build_embedding_table(model, imgs)
    t2 = build_embedding_table(model, imgs[::-1])
    np.testing.assert_allclose(t1.matrix(), t2.matrix(), atol=1e-9, rtol=0)
    with pytest.raises(MissingCharacterError) as info:
        build_embedding_table(model, [g for g in imgs if g.label.value != "q"])
    assert info.value.missing == ["q"]


def test_table_json_roundtrip_and_sidecar(tmp_path):
    table = GlyphEmbeddingTable.from_matrix(np.random.default_rng(1).normal(size=(62, 5)), {"seed": 1})
    table.save(tmp_path / "t.json")
    doc = json.loads((tmp_path / "t.json").read_text())
    assert doc["format_version"] == 1 and doc["dim"] == 5 and len(doc["entries"]) == 62
    loaded = GlyphEmbeddingTable.load(tmp_path / "t.json")
    np.testing.assert_array_equal(loaded.matrix(), table.matrix())
    assert loaded.fingerprint == table.fingerprint
    blob = table.to_sidecar()
    assert blob[:8] == b"GLYPHTB1" and len(blob) == 12 + 62 * 5 * 4
    side = GlyphEmbeddingTable.from_sidecar(blob)
    np.testing.assert_allclose(side.matrix(), table.matrix(), rtol=2**-23)
    doc["entries"]["a"][0] += 1
    (tmp_path / "bad.json").write_text(json.dumps(doc))
    with pytest.raises(FormatError):
        GlyphEmbeddingTable.load(tmp_path / "bad.json")


def test_confusion_identical_vectors_uniform():
    table = GlyphEmbeddingTable.from_matrix(np.ones((62, 4)))
    conf = confusion_matrix(table, 0.3)
    off = ~np.eye(62, dtype=bool)
    np.testing.assert_allclose(conf[off], 1 / 61)
    assert np.all(np.diag(conf) == 0)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_confusion_cold_limit_is_nearest_neighbour(seed):
    mat = np.random.default_rng(seed).normal(size=(62, 6))
    table = GlyphEmbeddingTable.from_matrix(mat)
    conf = confusion_matrix(table, 1e-6)
    nearest = brute_nearest(mat.tolist(), list(ALPHANUMERICS))
    for i, ch in enumerate(ALPHANUMERICS):
        assert ALPHANUMERICS[int(conf[i].argmax())] == nearest[ch]
        assert conf[i].max() == pytest.approx(1.0)


def test_confusion_rows_normalized_and_degenerate():
    mat = np.random.default_rng(3).normal(size=(62, 6))
    conf = confusion_matrix(GlyphEmbeddingTable.from_matrix(mat), 0.7)
    assert np.abs(conf.sum(axis=1) - 1).max() <= 1e-9
    mat[4] = 0
    with pytest.raises(DegenerateTableError):
        confusion_matrix(GlyphEmbeddingTable.from_matrix(mat), 0.7)


def test_classifier_save_load(tmp_path, tiny_model, tiny_data):
    model = tiny_model[0]
    save_classifier(model, tmp_path / "g.bin")
    loaded = load_classifier(tmp_path / "g.bin")
    np.testing.assert_array_equal(predict_proba(model, tiny_data[1][:10]), predict_proba(loaded, tiny_data[1][:10]))
    assert loaded.fingerprint() == model.fingerprint()
