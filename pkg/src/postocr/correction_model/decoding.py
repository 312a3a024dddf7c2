"""Greedy and beam-search decoding, and the ``correct`` entry points."""

from __future__ import annotations

from typing import Sequence

import torch

from ..errors import FingerprintMismatchError, LengthExceededError
from ..glyph_embedding import GlyphEmbeddingTable
from .network import CorrectionNet, pad_batch
from .training import ModelCheckpoint


def _check_length(model: CorrectionNet, text: str) -> None:
    if len(text) + 2 > model.config.max_len:
        raise LengthExceededError(f"input of {len(text)} characters exceeds max_len {model.config.max_len}")


@torch.no_grad()
def greedy_decode(model: CorrectionNet, texts: Sequence[str], batch_size: int = 64) -> list[str]:
    """Batched argmax decoding from BOS until EOS or ``max_len`` tokens."""
    was_training = model.training
    model.eval()
    vocab = model.vocab
    out: list[str] = []
    for k in range(0, len(texts), batch_size):
        chunk = list(texts[k : k + batch_size])
        for t in chunk:
            _check_length(model, t)
        src = pad_batch([vocab.encode(t) for t in chunk], vocab.pad)
        memory = model.encode(src)
        ys = torch.full((len(chunk), 1), vocab.bos, dtype=torch.long)
        done = torch.zeros(len(chunk), dtype=torch.bool)
        for _ in range(model.config.max_len - 1):
            nxt = model.decode(memory, src, ys)[:, -1].argmax(dim=-1)
            nxt = torch.where(done, torch.full_like(nxt, vocab.eos), nxt)
            ys = torch.cat([ys, nxt[:, None]], dim=1)
            done |= nxt == vocab.eos
            if done.all():
                break
        out.extend(vocab.decode(row[1:].tolist()) for row in ys)
    model.train(was_training)
    return [o if t else "" for o, t in zip(out, texts)]


@torch.no_grad()
def beam_decode(model: CorrectionNet, text: str, beam_width: int) -> str:
    """Beam search scored by mean per-token log-probability.

    Ties are broken by the token sequence (lower token indices first).
    """
    _check_length(model, text)
    model.eval()
    vocab = model.vocab
    src = pad_batch([vocab.encode(text)], vocab.pad)
    memory = model.encode(src)
    beams: list[tuple[float, list[int]]] = [(0.0, [vocab.bos])]
    finished: list[tuple[float, list[int]]] = []
    for _ in range(model.config.max_len - 1):
        ys = torch.tensor([b[1] for b in beams])
        logp = torch.log_softmax(model.decode(memory.expand(len(beams), -1, -1), src.expand(len(beams), -1), ys)[:, -1].double(), dim=-1)
        candidates = []
        for (score, seq), row in zip(beams, logp):
            top = torch.topk(row, beam_width)
            for lp, tok in zip(top.values.tolist(), top.indices.tolist()):
                candidates.append((score + lp, seq + [tok]))
        candidates.sort(key=lambda c: (-c[0] / (len(c[1]) - 1), c[1]))
        beams = []
        for score, seq in candidates[:beam_width]:
            (finished if seq[-1] == vocab.eos else beams).append((score, seq))
        if len(finished) >= beam_width or not beams:
            break
    pool = finished or beams
    best = min(pool, key=lambda c: (-c[0] / (len(c[1]) - 1), c[1]))
    return vocab.decode(best[1][1:])


class Corrector:
    """A loaded checkpoint bound to its glyph table; immutable after construction."""

    def __init__(self, checkpoint: ModelCheckpoint, table: GlyphEmbeddingTable):
        self.checkpoint = checkpoint
        self.model = checkpoint.build(table)

    def correct(self, text: str, beam_width: int = 1) -> str:
        if not text:
            return ""
        if beam_width <= 1:
            return greedy_decode(self.model, [text])[0]
        return beam_decode(self.model, text, beam_width)

    def correct_batch(self, texts: Sequence[str], beam_width: int = 1) -> list[str]:
        if beam_width <= 1:
            return greedy_decode(self.model, list(texts))
        return [self.correct(t, beam_width) for t in texts]


def correct(text: str, checkpoint: ModelCheckpoint, table: GlyphEmbeddingTable, beam_width: int = 1) -> str:
    """Correct one normalized text. Empty input returns empty output without running the model."""
    if not text:
        if table.fingerprint != checkpoint.table_fingerprint:
            raise FingerprintMismatchError("glyph table does not match the checkpoint's fingerprint")
        return ""
    return Corrector(checkpoint, table).correct(text, beam_width)
