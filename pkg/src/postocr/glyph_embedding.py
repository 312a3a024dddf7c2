"""Open-set glyph classifier and per-character averaged glyph embeddings.

The network is a small convolutional backbone followed by two linear layers:
a projection from backbone features to ``embed_dim`` and a classification head
from ``embed_dim`` to the class logits. The embedding of an image is the
projection output; the head is dropped for extraction.

Two open-set modes:

``garbage_class``
    63 logits, the last one a learned GARBAGE class trained on non-Latin
    glyphs.
``threshold_softmax``
    62 logits; an image whose top softmax probability falls below
    ``reject_threshold`` is rejected as GARBAGE.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import struct
from collections import OrderedDict
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from . import serialization
from .errors import (
    DegenerateTableError,
    DivergenceError,
    EmptyInputError,
    FormatError,
    MissingCharacterError,
    MissingGarbageDataError,
    ShapeMismatchError,
)
from .glyphset import CANVAS, CLASSES, GARBAGE, CharClass, GlyphImage, to_array
from .text import ALPHANUMERICS

logger = logging.getLogger(__name__)

OPEN_SET_MODES = ("garbage_class", "threshold_softmax")
UNFREEZE_POLICIES = ("last2", "last4", "all")


@dataclass(frozen=True)
class GlyphClassifierConfig:
    widths: tuple[int, ...] = (16, 32, 64, 128)
    embed_dim: int = 768
    open_set_mode: str = "garbage_class"
    reject_threshold: float = 0.5
    unfreeze_policy: str = "all"
    epochs: int = 8
    batch_size: int = 64
    learning_rate: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 5e-4
    seed: int = 0
    canvas: int = CANVAS

    def __post_init__(self):
        if self.embed_dim <= 0:
            raise ValueError("embed_dim must be positive")
        if self.open_set_mode not in OPEN_SET_MODES:
            raise ValueError(f"open_set_mode must be one of {OPEN_SET_MODES}")
        if self.unfreeze_policy not in UNFREEZE_POLICIES:
            raise ValueError(f"unfreeze_policy must be one of {UNFREEZE_POLICIES}")
        if not 0 < self.reject_threshold <= 1:
            raise ValueError("reject_threshold must lie in (0, 1]")
        if len(self.widths) < 2:
            raise ValueError("backbone needs at least two blocks")
        object.__setattr__(self, "widths", tuple(self.widths))

    @property
    def num_classes(self) -> int:
        return 63 if self.open_set_mode == "garbage_class" else 62


class GlyphClassifier(nn.Module):
    def __init__(self, config: GlyphClassifierConfig):
        super().__init__()
        self.config = config
        blocks, in_ch = [], 1
        for width in config.widths:
            blocks.append(
                nn.Sequential(
                    nn.Conv2d(in_ch, width, 3, padding=1, bias=False),
                    nn.BatchNorm2d(width),
                    nn.ReLU(inplace=True),
                    nn.Conv2d(width, width, 3, padding=1, bias=False),
                    nn.BatchNorm2d(width),
                    nn.ReLU(inplace=True),
                    nn.MaxPool2d(2),
                )
            )
            in_ch = width
        self.blocks = nn.ModuleList(blocks)
        self.projection = nn.Linear(in_ch, config.embed_dim)
        self.head = nn.Linear(config.embed_dim, config.num_classes)

    def features(self, x: torch.Tensor) -> torch.Tensor:
        # pixels are ink-on-white; the network sees ink as positive signal
        h = (1.0 - x).unsqueeze(1)
        for block in self.blocks:
            h = block(h)
        return h.mean(dim=(2, 3))

    def embed(self, x: torch.Tensor) -> torch.Tensor:
        return self.projection(self.features(x))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.embed(x))

    def reset_head(self, seed: int) -> None:
        """Fresh projection and head, as when fine-tuning a pre-initialized backbone."""
        with torch.random.fork_rng():
            torch.manual_seed(seed)
            self.projection.reset_parameters()
            self.head.reset_parameters()

    def trainable_modules(self, policy: str) -> list[nn.Module]:
        head = [self.projection, self.head]
        if policy == "last2":
            return head
        if policy == "last4":
            return list(self.blocks[-2:]) + head
        return list(self.blocks) + head

    def fingerprint(self) -> str:
        h = hashlib.sha256(serialization.canonical_json(asdict(self.config)))
        for name, tensor in self.state_dict().items():
            if not tensor.dtype.is_floating_point:
                continue
            h.update(name.encode())
            h.update(tensor.detach().cpu().numpy().astype("<f4").tobytes())
        return h.hexdigest()


def build_classifier(config: GlyphClassifierConfig) -> GlyphClassifier:
    with torch.random.fork_rng():
        torch.manual_seed(config.seed)
        return GlyphClassifier(config)


@dataclass
class GlyphTrainingReport:
    epoch_losses: list[float]
    val_accuracy: float
    garbage_recall: float | None
    closed_set_accuracy: float
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _check_images(model: GlyphClassifier, pixels: np.ndarray) -> torch.Tensor:
    c = model.config.canvas
    if pixels.ndim == 2:
        pixels = pixels[None]
    if pixels.ndim != 3 or pixels.shape[1:] != (c, c):
        raise ShapeMismatchError(f"expected {c}x{c} image(s), got shape {pixels.shape}")
    return torch.from_numpy(np.ascontiguousarray(pixels, dtype=np.float32))


def _as_pixels(images) -> np.ndarray:
    if isinstance(images, GlyphImage):
        return images.pixels
    if isinstance(images, np.ndarray):
        return images
    return np.stack([g.pixels if isinstance(g, GlyphImage) else g for g in images])


@torch.no_grad()
def predict_proba(model: GlyphClassifier, images, batch_size: int = 256) -> np.ndarray:
    """Softmax probabilities, shape ``(N, num_classes)``."""
    x = _check_images(model, _as_pixels(images))
    model.eval()
    out = [F.softmax(model(x[k : k + batch_size]).double(), dim=1) for k in range(0, len(x), batch_size)]
    return torch.cat(out).numpy()


def decide(probs: np.ndarray, config: GlyphClassifierConfig, reject_threshold: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Class ids and confidences from probabilities under the configured open-set rule."""
    confidence = probs.max(axis=1)
    pred = probs.argmax(axis=1)
    if config.open_set_mode == "threshold_softmax":
        thr = config.reject_threshold if reject_threshold is None else reject_threshold
        pred = np.where(confidence < thr, GARBAGE.class_id, pred)
    return pred, confidence


def classify_open_set(model: GlyphClassifier, image, reject_threshold: float | None = None) -> tuple[CharClass, float]:
    probs = predict_proba(model, image)
    pred, conf = decide(probs, model.config, reject_threshold)
    return CLASSES[int(pred[0])], float(conf[0])


@torch.no_grad()
def extract_embeddings(model: GlyphClassifier, images, batch_size: int = 256) -> np.ndarray:
    x = _check_images(model, _as_pixels(images))
    model.eval()
    return torch.cat([model.embed(x[k : k + batch_size]) for k in range(0, len(x), batch_size)]).double().numpy()


def extract_embedding(model: GlyphClassifier, image) -> np.ndarray:
    """Projection-layer activation for one image, length ``embed_dim``."""
    return extract_embeddings(model, image)[0]


def evaluate_classifier(model: GlyphClassifier, images: Sequence[GlyphImage]) -> dict:
    """Open-set accuracy over all items, garbage recall, and accuracy on real characters."""
    x, y = to_array(images)
    pred, _ = decide(predict_proba(model, x), model.config)
    garbage = y == GARBAGE.class_id
    return {
        "accuracy": float((pred == y).mean()),
        "garbage_recall": float((pred[garbage] == y[garbage]).mean()) if garbage.any() else None,
        "closed_set_accuracy": float((pred[~garbage] == y[~garbage]).mean()) if (~garbage).any() else None,
    }


def train_glyph_classifier(
    train: Sequence[GlyphImage],
    val: Sequence[GlyphImage],
    config: GlyphClassifierConfig,
    init: GlyphClassifier | None = None,
) -> tuple[GlyphClassifier, GlyphTrainingReport]:
    """Train with cross-entropy and SGD (momentum), cosine learning-rate decay.

    With ``init`` the backbone weights are copied from it, the projection and
    head are re-initialized, and only the modules selected by
    ``config.unfreeze_policy`` are trained. From scratch, everything trains.
    """
    if not train or not val:
        raise EmptyInputError("training and validation sets must be non-empty")
    x, y = to_array(train)
    is_garbage = y == GARBAGE.class_id
    if config.open_set_mode == "garbage_class" and not is_garbage.any():
        raise MissingGarbageDataError("garbage_class mode needs GARBAGE training samples")
    if config.open_set_mode == "threshold_softmax":
        x, y = x[~is_garbage], y[~is_garbage]

    model = build_classifier(config)
    frozen: list[nn.Module] = []
    if init is not None:
        backbone = {k: v for k, v in init.state_dict().items() if k.startswith("blocks.")}
        model.load_state_dict(backbone, strict=False)
        model.reset_head(config.seed)
        trainable = model.trainable_modules(config.unfreeze_policy)
        frozen = [b for b in model.blocks if b not in trainable]
        for module in frozen:
            module.requires_grad_(False)
    params = [p for p in model.parameters() if p.requires_grad]

    opt = torch.optim.SGD(params, lr=config.learning_rate, momentum=config.momentum, weight_decay=config.weight_decay)
    steps_per_epoch = math.ceil(len(x) / config.batch_size)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=max(1, config.epochs * steps_per_epoch))
    rng = np.random.default_rng(config.seed)
    xt, yt = torch.from_numpy(x), torch.from_numpy(y)
    losses = []
    for epoch in range(config.epochs):
        model.train()
        for module in frozen:
            module.eval()  # keep batch-norm statistics of frozen blocks fixed
        order = torch.from_numpy(rng.permutation(len(x)))
        total, seen = 0.0, 0
        for k in range(0, len(x), config.batch_size):
            idx = order[k : k + config.batch_size]
            loss = F.cross_entropy(model(xt[idx]), yt[idx])
            if not torch.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            sched.step()
            total += loss.item() * len(idx)
            seen += len(idx)
        losses.append(total / seen)
        logger.info("glyph epoch %d loss %.4f", epoch, losses[-1])

    scores = evaluate_classifier(model, val)
    report = GlyphTrainingReport(
        epoch_losses=losses,
        val_accuracy=scores["accuracy"],
        garbage_recall=scores["garbage_recall"],
        closed_set_accuracy=scores["closed_set_accuracy"],
        config=asdict(config),
    )
    return model, report


def compare_open_set_variants(
    train: Sequence[GlyphImage],
    val: Sequence[GlyphImage],
    base: GlyphClassifierConfig,
    pretrained: GlyphClassifier | None = None,
) -> dict[str, float]:
    """Fine-tune one pre-initialized backbone under each open-set mode / unfreeze policy.

    Without ``pretrained``, a backbone is first trained from scratch with ``base``.
    Returns validation accuracy per variant; no ordering between them is implied.
    """
    if pretrained is None:
        pretrained, _ = train_glyph_classifier(train, val, replace(base, unfreeze_policy="all"))
    variants = {
        "garbage_class/last2": replace(base, open_set_mode="garbage_class", unfreeze_policy="last2"),
        "garbage_class/last4": replace(base, open_set_mode="garbage_class", unfreeze_policy="last4"),
        "threshold_softmax/last4": replace(base, open_set_mode="threshold_softmax", unfreeze_policy="last4"),
    }
    return {name: train_glyph_classifier(train, val, cfg, init=pretrained)[1].val_accuracy for name, cfg in variants.items()}


# -- classifier persistence ----------------------------------------------------

CLASSIFIER_MAGIC = b"GLYPHCL1"


def save_classifier(model: GlyphClassifier, path: str | Path) -> None:
    tensors = OrderedDict((k, v.detach().numpy()) for k, v in model.state_dict().items() if v.dtype.is_floating_point)
    header = {"config": asdict(model.config)}
    Path(path).write_bytes(serialization.pack(CLASSIFIER_MAGIC, header, tensors))


def load_classifier(path: str | Path) -> GlyphClassifier:
    header, tensors = serialization.read_file(path, CLASSIFIER_MAGIC)
    config = GlyphClassifierConfig(**header["config"])
    model = GlyphClassifier(config)
    state = model.state_dict()
    missing = [k for k, v in state.items() if v.dtype.is_floating_point and k not in tensors]
    if missing:
        raise FormatError(f"classifier file lacks tensors: {missing[:3]}")
    model.load_state_dict({k: torch.from_numpy(v) for k, v in tensors.items()}, strict=False)
    model.eval()
    return model


# -- embedding table -----------------------------------------------------------


@dataclass
class GlyphEmbeddingTable:
    dim: int
    entries: dict[str, np.ndarray]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        missing = set(ALPHANUMERICS) - set(self.entries)
        if missing:
            raise MissingCharacterError(missing)
        entries = {}
        for ch in ALPHANUMERICS:
            vec = np.asarray(self.entries[ch], dtype=np.float64)
            if vec.shape != (self.dim,):
                raise ValueError(f"entry {ch!r} has shape {vec.shape}, expected ({self.dim},)")
            if not np.isfinite(vec).all():
                raise ValueError(f"entry {ch!r} has non-finite components")
            entries[ch] = vec
        self.entries = entries

    def matrix(self) -> np.ndarray:
        """``(62, dim)`` float64 rows in class-id order."""
        return np.stack([self.entries[ch] for ch in ALPHANUMERICS])

    @property
    def fingerprint(self) -> str:
        h = hashlib.sha256(struct.pack("<I", self.dim))
        h.update(self.matrix().astype("<f8").tobytes())
        return h.hexdigest()

    @classmethod
    def from_matrix(cls, matrix: np.ndarray, metadata: dict | None = None) -> "GlyphEmbeddingTable":
        matrix = np.asarray(matrix, dtype=np.float64)
        return cls(matrix.shape[1], dict(zip(ALPHANUMERICS, matrix)), dict(metadata or {}))

    def to_json(self) -> str:
        doc = {
            "format_version": 1,
            "dim": self.dim,
            "entries": {ch: self.entries[ch].tolist() for ch in ALPHANUMERICS},
            "fingerprint": self.fingerprint,
            "metadata": self.metadata,
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "GlyphEmbeddingTable":
        try:
            doc = json.loads(text)
            if doc.get("format_version") != 1:
                raise FormatError(f"unsupported table format_version {doc.get('format_version')!r}")
            table = cls(int(doc["dim"]), {k: np.array(v, dtype=np.float64) for k, v in doc["entries"].items()}, doc.get("metadata", {}))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise FormatError(f"malformed glyph table: {exc}") from exc
        if "fingerprint" in doc and doc["fingerprint"] != table.fingerprint:
            raise FormatError("glyph table fingerprint does not match its entries")
        return table

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path: str | Path) -> "GlyphEmbeddingTable":
        path = Path(path)
        if not path.is_file():
            raise FormatError(f"no such file: {path}")
        return cls.from_json(path.read_text())

    # binary sidecar: magic, uint32 dim, float32 rows in class-id order
    SIDECAR_MAGIC = b"GLYPHTB1"

    def to_sidecar(self) -> bytes:
        return self.SIDECAR_MAGIC + struct.pack("<I", self.dim) + self.matrix().astype("<f4").tobytes()

    @classmethod
    def from_sidecar(cls, blob: bytes, metadata: dict | None = None) -> "GlyphEmbeddingTable":
        if blob[:8] != cls.SIDECAR_MAGIC:
            raise FormatError("bad glyph table sidecar magic")
        (dim,) = struct.unpack_from("<I", blob, 8)
        body = blob[12:]
        if len(body) != 4 * dim * len(ALPHANUMERICS):
            raise FormatError("glyph table sidecar has the wrong size")
        matrix = np.frombuffer(body, dtype="<f4").reshape(len(ALPHANUMERICS), dim)
        return cls.from_matrix(matrix.astype(np.float64), metadata)


def build_embedding_table(
    model: GlyphClassifier,
    images: Mapping[str, Sequence] | Sequence[GlyphImage],
    metadata: dict | None = None,
) -> GlyphEmbeddingTable:
    """Average the embeddings of all images of each character.

    ``images`` is either a mapping ``char -> images`` or a flat list of
    GlyphImages; GARBAGE items are ignored.
    """
    if isinstance(images, Mapping):
        groups = {ch: list(v) for ch, v in images.items() if ch in ALPHANUMERICS and len(v)}
    else:
        groups = {}
        for g in images:
            if not g.label.is_garbage:
                groups.setdefault(g.label.value, []).append(g)
    missing = set(ALPHANUMERICS) - set(groups)
    if missing:
        raise MissingCharacterError(missing)
    # batch size 1 keeps each embedding bitwise independent of its group
    entries = {ch: extract_embeddings(model, groups[ch], batch_size=1).mean(axis=0) for ch in ALPHANUMERICS}
    meta = {"source_model": model.fingerprint(), "seed": model.config.seed}
    meta.update(metadata or {})
    return GlyphEmbeddingTable(model.config.embed_dim, entries, meta)


def cosine_matrix(vectors: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=1)
    if (norms == 0).any():
        raise DegenerateTableError("embedding with zero norm")
    unit = vectors / norms[:, None]
    return unit @ unit.T


def confusion_matrix(table: GlyphEmbeddingTable, temperature: float) -> np.ndarray:
    """62x62 row-stochastic matrix; off-diagonal weight ~ exp(cosine / temperature)."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    logits = cosine_matrix(table.matrix()) / temperature
    np.fill_diagonal(logits, -np.inf)
    logits -= logits.max(axis=1, keepdims=True)
    weights = np.exp(logits)
    return weights / weights.sum(axis=1, keepdims=True)


def separation_score(model: GlyphClassifier, images: Sequence[GlyphImage]) -> float:
    """Mean intra-character cosine minus mean inter-character cosine over image embeddings."""
    real = [g for g in images if not g.label.is_garbage]
    emb = extract_embeddings(model, real)
    labels = np.array([g.label.class_id for g in real])
    sims = cosine_matrix(emb)
    same = labels[:, None] == labels[None, :]
    off_diag = ~np.eye(len(labels), dtype=bool)
    return float(sims[same & off_diag].mean() - sims[~same].mean())
