"""Teacher-forced training loop and the checkpoint container."""

from __future__ import annotations

import json
import logging
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .. import serialization
from ..corpus import CorrectionPair
from ..errors import DimensionMismatchError, DivergenceError, EmptyInputError, FingerprintMismatchError, FormatError
from ..glyph_embedding import GlyphEmbeddingTable
from ..metrics import evaluate_corpus
from .network import VOCAB, CorrectionModelConfig, CorrectionNet, Vocabulary, build_model, make_batch

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"POCRCKP1"


@dataclass
class ModelCheckpoint:
    config: CorrectionModelConfig
    vocabulary: list[str]
    tensors: "OrderedDict[str, np.ndarray]"
    table_fingerprint: str
    step: int = 0

    @classmethod
    def from_model(cls, model: CorrectionNet, fingerprint: str, step: int) -> "ModelCheckpoint":
        tensors = OrderedDict((k, v.detach().float().numpy().copy()) for k, v in model.state_dict().items())
        return cls(model.config, list(model.vocab.tokens), tensors, fingerprint, step)

    def to_bytes(self) -> bytes:
        header = {
            "config": self.config.to_dict(),
            "vocabulary": self.vocabulary,
            "table_fingerprint": self.table_fingerprint,
            "step": self.step,
        }
        return serialization.pack(CHECKPOINT_MAGIC, header, self.tensors)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "ModelCheckpoint":
        header, tensors = serialization.unpack(CHECKPOINT_MAGIC, blob)
        try:
            config = CorrectionModelConfig.from_dict(header["config"])
            return cls(config, header["vocabulary"], tensors, header["table_fingerprint"], header["step"])
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"malformed checkpoint header: {exc}") from exc

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: str | Path) -> "ModelCheckpoint":
        path = Path(path)
        if not path.is_file():
            raise FormatError(f"checkpoint not found: {path}")
        return cls.from_bytes(path.read_bytes())

    def build(self, table: GlyphEmbeddingTable) -> CorrectionNet:
        """Instantiate the network in eval mode; the table must match the fingerprint."""
        if table.fingerprint != self.table_fingerprint:
            raise FingerprintMismatchError("glyph table does not match the checkpoint's fingerprint")
        model = CorrectionNet(self.config, Vocabulary(self.vocabulary))
        model.load_state_dict({k: torch.from_numpy(v.copy()) for k, v in self.tensors.items()})
        model.glyph.set_table(table)
        return model.eval()


@dataclass
class TrainingReport:
    records: list[dict] = field(default_factory=list)
    skipped: int = 0

    @property
    def final_loss(self) -> float:
        return self.records[-1]["train_loss"]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records)


def _fits(pair: CorrectionPair, max_len: int) -> bool:
    return len(pair.ocr_text) + 2 <= max_len and len(pair.gt_text) + 2 <= max_len


def _lr_factor(step: int, warmup: int, total: int) -> float:
    if step < warmup:
        return (step + 1) / warmup
    progress = (step - warmup) / max(1, total - warmup)
    return 0.1 + 0.9 * 0.5 * (1 + math.cos(math.pi * min(1.0, progress)))


def train_correction_model(
    train_pairs: Sequence[CorrectionPair],
    val_pairs: Sequence[CorrectionPair],
    table: GlyphEmbeddingTable,
    config: CorrectionModelConfig,
) -> tuple[ModelCheckpoint, TrainingReport]:
    """Teacher-forced cross-entropy on ``gt_text`` given ``ocr_text``.

    AdamW with linear warmup and cosine decay to 10% of the peak rate.
    Pairs longer than ``max_len`` are skipped and counted in the report.
    Every ``log_every`` steps the mean training loss and the greedy-decoding
    CER on up to ``val_limit`` validation pairs are recorded.
    """
    from .decoding import greedy_decode

    if table.dim != config.d_glyph:
        raise DimensionMismatchError(f"glyph table dim {table.dim} != d_glyph {config.d_glyph}")
    usable = [p for p in train_pairs if _fits(p, config.max_len)]
    skipped = len(train_pairs) - len(usable)
    if not usable:
        raise EmptyInputError("no training pairs fit within max_len")
    val = [p for p in val_pairs if _fits(p, config.max_len)][: config.val_limit]

    report = TrainingReport(skipped=skipped)
    with torch.random.fork_rng():
        torch.manual_seed(config.seed)
        model = build_model(config, table)
        params = [p for p in model.parameters() if p.requires_grad]
        opt = torch.optim.AdamW(params, lr=config.learning_rate, weight_decay=0.01)
        sched = torch.optim.lr_scheduler.LambdaLR(opt, lambda s: _lr_factor(s, config.warmup_steps, config.steps))
        rng = np.random.default_rng([config.seed, 0xC0])
        order, cursor = rng.permutation(len(usable)), 0
        running, count = 0.0, 0
        for step in range(1, config.steps + 1):
            if cursor + config.batch_size > len(order):
                order, cursor = rng.permutation(len(usable)), 0
            idx = order[cursor : cursor + config.batch_size]
            cursor += config.batch_size
            batch = [(usable[i].ocr_text, usable[i].gt_text) for i in idx]
            model.train()
            loss = model.loss(*make_batch(batch, model.vocab))
            if not torch.isfinite(loss):
                raise DivergenceError(f"non-finite loss at step {step}")
            opt.zero_grad()
            loss.backward()
            torch.nn.utils.clip_grad_norm_(params, 1.0)
            opt.step()
            sched.step()
            running += loss.item()
            count += 1
            if step % config.log_every == 0 or step == config.steps:
                record = {"step": step, "train_loss": running / count, "val_cer": None}
                if val:
                    hyps = greedy_decode(model, [p.ocr_text for p in val])
                    record["val_cer"] = evaluate_corpus([(h, p.gt_text) for h, p in zip(hyps, val)]).cer_paper
                report.records.append(record)
                logger.info("step %d loss %.4f val_cer %s", step, record["train_loss"], record["val_cer"])
                running, count = 0.0, 0
    return ModelCheckpoint.from_model(model, table.fingerprint, config.steps), report


@torch.no_grad()
def teacher_forced_loss(model: CorrectionNet, pairs: Sequence[CorrectionPair], batch_size: int = 64) -> float:
    """Token-weighted mean cross-entropy (eval mode, no label smoothing)."""
    model.eval()
    total, tokens = 0.0, 0
    for k in range(0, len(pairs), batch_size):
        chunk = [(p.ocr_text, p.gt_text) for p in pairs[k : k + batch_size]]
        src, tgt_in, tgt_out = make_batch(chunk, model.vocab)
        logits = model(src, tgt_in)
        mask = tgt_out != model.vocab.pad
        nll = torch.nn.functional.cross_entropy(logits.reshape(-1, logits.shape[-1]), tgt_out.reshape(-1), reduction="none")
        total += nll[mask.reshape(-1)].sum().item()
        tokens += int(mask.sum())
    return total / tokens
