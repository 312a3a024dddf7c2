"""Dual-encoder / transformer-decoder correction network.

Channel A embeds characters with a learned embedding followed by one
bidirectional GRU layer (a trainable stand-in for a pretrained
character-aware language model). Channel B looks characters up in the frozen
glyph embedding table. Each channel runs through its own residual 1-D
convolution stack; the two are concatenated per position and projected to
``d_model`` to form the decoder memory.

Padding positions are forced to exactly zero after every encoder layer, which
is what makes losses invariant to extra right padding.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F
from torch.nn.utils.rnn import pack_padded_sequence, pad_packed_sequence

from ..errors import DimensionMismatchError, LengthExceededError
from ..glyph_embedding import GlyphEmbeddingTable
from ..text import ALPHANUMERICS

PAD, BOS, EOS, UNK, SPACE = "<pad>", "<bos>", "<eos>", "<unk>", " "
SPECIALS = (PAD, BOS, EOS, UNK, SPACE)


class Vocabulary:
    """PAD, BOS, EOS, UNK, space, then the 62 alphanumerics (67 tokens)."""

    def __init__(self, tokens=SPECIALS + tuple(ALPHANUMERICS)):
        self.tokens = list(tokens)
        self.index = {t: i for i, t in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ValueError("duplicate vocabulary tokens")
        if self.index.get(PAD) != 0:
            raise ValueError("PAD must have index 0")

    def __len__(self):
        return len(self.tokens)

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    pad = property(lambda self: self.index[PAD])
    bos = property(lambda self: self.index[BOS])
    eos = property(lambda self: self.index[EOS])
    unk = property(lambda self: self.index[UNK])

    def encode(self, text: str) -> list[int]:
        """BOS + characters + EOS."""
        return [self.bos] + [self.index.get(c, self.unk) for c in text] + [self.eos]

    def decode(self, ids) -> str:
        out = []
        for i in ids:
            i = int(i)
            if i == self.eos:
                break
            tok = self.tokens[i]
            if tok not in (PAD, BOS, UNK):
                out.append(tok)
        return "".join(out)


VOCAB = Vocabulary()


@dataclass(frozen=True)
class CorrectionModelConfig:
    d_char: int = 64
    d_glyph: int = 64
    enc_layers: int = 3
    enc_kernel: int = 5
    enc_width: int = 128
    d_model: int = 256
    dec_layers: int = 2
    dec_heads: int = 4
    dropout: float = 0.1
    max_len: int = 128
    label_smoothing: float = 0.0
    learning_rate: float = 1e-3
    warmup_steps: int = 100
    batch_size: int = 32
    steps: int = 2000
    log_every: int = 100
    val_limit: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.d_model % self.dec_heads:
            raise ValueError("d_model must be divisible by dec_heads")
        if self.max_len < 2:
            raise ValueError("max_len must be at least 2")
        if self.d_char % 2:
            raise ValueError("d_char must be even (bidirectional halves)")
        if self.enc_kernel % 2 == 0:
            raise ValueError("enc_kernel must be odd for length-preserving padding")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "CorrectionModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**data)


def sinusoidal_positions(length: int, dim: int) -> torch.Tensor:
    pos = torch.arange(length, dtype=torch.float64)[:, None]
    freq = torch.exp(torch.arange(0, dim, 2, dtype=torch.float64) * (-math.log(10000.0) / dim))
    pe = torch.zeros(length, dim, dtype=torch.float64)
    pe[:, 0::2] = torch.sin(pos * freq)
    pe[:, 1::2] = torch.cos(pos * freq[: dim // 2])
    return pe


class ContextualEmbedder(nn.Module):
    def __init__(self, vocab_size: int, d_char: int):
        super().__init__()
        self.embedding = nn.Embedding(vocab_size, d_char, padding_idx=0)
        self.mix = nn.GRU(d_char, d_char // 2, batch_first=True, bidirectional=True)

    def forward(self, tokens: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        x = self.embedding(tokens)
        lengths = mask.sum(dim=1).cpu()
        packed = pack_padded_sequence(x, lengths, batch_first=True, enforce_sorted=False)
        mixed, _ = pad_packed_sequence(self.mix(packed)[0], batch_first=True, total_length=tokens.shape[1])
        return (x + mixed) * mask.unsqueeze(-1)


class GlyphLookup(nn.Module):
    """Frozen table lookup for alphanumerics, learned vectors for BOS/EOS/UNK/space, zero for PAD."""

    def __init__(self, vocab_size: int, d_glyph: int):
        super().__init__()
        self.d_glyph = d_glyph
        # rows 1..4 (BOS, EOS, UNK, space) are learned
        self.special = nn.Parameter(torch.randn(len(SPECIALS) - 1, d_glyph))
        self.register_buffer("table", torch.zeros(vocab_size, d_glyph), persistent=False)

    def set_table(self, table: GlyphEmbeddingTable) -> None:
        if table.dim != self.d_glyph:
            raise DimensionMismatchError(f"glyph table dim {table.dim} != model d_glyph {self.d_glyph}")
        matrix = table.matrix()
        # rescale so rows have unit RMS on average; the geometry is untouched
        scale = np.sqrt(self.d_glyph) / np.linalg.norm(matrix, axis=1).mean()
        full = np.zeros((len(SPECIALS) + len(ALPHANUMERICS), self.d_glyph))
        full[len(SPECIALS) :] = matrix * scale
        self.table = torch.tensor(full, dtype=self.special.dtype)

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        n_special = self.special.shape[0]
        specials = torch.cat([torch.zeros_like(self.special[:1]), self.special])
        weight = torch.cat([specials, self.table[n_special + 1 :]])
        return F.embedding(tokens, weight)


class ConvEncoder(nn.Module):
    def __init__(self, d_in: int, width: int, layers: int, kernel: int, dropout: float):
        super().__init__()
        self.proj = nn.Linear(d_in, width)
        self.norms = nn.ModuleList(nn.LayerNorm(width) for _ in range(layers))
        self.convs = nn.ModuleList(nn.Conv1d(width, width, kernel, padding=kernel // 2) for _ in range(layers))
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        m = mask.unsqueeze(-1).to(x.dtype)
        h = self.proj(x) * m
        for norm, conv in zip(self.norms, self.convs):
            y = norm(h) * m
            y = conv(y.transpose(1, 2)).transpose(1, 2)
            h = (h + self.dropout(F.gelu(y))) * m
        return h


class CorrectionNet(nn.Module):
    def __init__(self, config: CorrectionModelConfig, vocab: Vocabulary = VOCAB):
        super().__init__()
        self.config = config
        self.vocab = vocab
        v = len(vocab)
        c = config
        self.contextual = ContextualEmbedder(v, c.d_char)
        self.glyph = GlyphLookup(v, c.d_glyph)
        self.encoder_char = ConvEncoder(c.d_char, c.enc_width, c.enc_layers, c.enc_kernel, c.dropout)
        self.encoder_glyph = ConvEncoder(c.d_glyph, c.enc_width, c.enc_layers, c.enc_kernel, c.dropout)
        self.fuse = nn.Linear(2 * c.enc_width, c.d_model)
        self.tgt_embedding = nn.Embedding(v, c.d_model, padding_idx=0)
        layer = nn.TransformerDecoderLayer(
            c.d_model, c.dec_heads, 4 * c.d_model, c.dropout, activation="gelu", batch_first=True, norm_first=True
        )
        self.decoder = nn.TransformerDecoder(layer, c.dec_layers, norm=nn.LayerNorm(c.d_model))
        self.out = nn.Linear(c.d_model, v)
        self.register_buffer("positions", sinusoidal_positions(c.max_len, c.d_model).float(), persistent=False)
        self.emb_dropout = nn.Dropout(c.dropout)

    # -- encoder side ----------------------------------------------------------

    def embed_contextual(self, src: torch.Tensor) -> torch.Tensor:
        return self.contextual(src, src != self.vocab.pad)

    def embed_glyph(self, src: torch.Tensor) -> torch.Tensor:
        return self.glyph(src)

    def encode_dual(self, char_seq: torch.Tensor, glyph_seq: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        if char_seq.shape[:2] != glyph_seq.shape[:2]:
            raise LengthExceededError(f"channel lengths differ: {char_seq.shape[1]} vs {glyph_seq.shape[1]}")
        a = self.encoder_char(char_seq, mask)
        b = self.encoder_glyph(glyph_seq, mask)
        return self.fuse(torch.cat([a, b], dim=-1)) * mask.unsqueeze(-1).to(a.dtype)

    def encode(self, src: torch.Tensor) -> torch.Tensor:
        mask = src != self.vocab.pad
        return self.encode_dual(self.embed_contextual(src), self.embed_glyph(src), mask)

    # -- decoder side ----------------------------------------------------------

    def decode(self, memory: torch.Tensor, src: torch.Tensor, tgt_in: torch.Tensor) -> torch.Tensor:
        """Next-token logits for every target prefix position."""
        length = tgt_in.shape[1]
        if length > self.config.max_len:
            raise LengthExceededError(f"target length {length} exceeds max_len {self.config.max_len}")
        scale = math.sqrt(self.config.d_model)
        y = self.tgt_embedding(tgt_in) * scale + self.positions[:length].to(memory.dtype)
        y = self.emb_dropout(y)
        causal = torch.triu(torch.ones(length, length, dtype=torch.bool, device=src.device), diagonal=1)
        h = self.decoder(
            y,
            memory,
            tgt_mask=causal,
            tgt_key_padding_mask=tgt_in == self.vocab.pad,
            memory_key_padding_mask=src == self.vocab.pad,
            tgt_is_causal=True,
        )
        return self.out(h)

    def forward(self, src: torch.Tensor, tgt_in: torch.Tensor) -> torch.Tensor:
        return self.decode(self.encode(src), src, tgt_in)

    def loss(self, src: torch.Tensor, tgt_in: torch.Tensor, tgt_out: torch.Tensor) -> torch.Tensor:
        logits = self(src, tgt_in)
        return F.cross_entropy(
            logits.reshape(-1, logits.shape[-1]),
            tgt_out.reshape(-1),
            ignore_index=self.vocab.pad,
            label_smoothing=self.config.label_smoothing,
        )


def pad_batch(seqs: list[list[int]], pad: int = 0, length: int | None = None) -> torch.Tensor:
    length = length or max(len(s) for s in seqs)
    out = torch.full((len(seqs), length), pad, dtype=torch.long)
    for row, s in enumerate(seqs):
        out[row, : len(s)] = torch.tensor(s, dtype=torch.long)
    return out


def make_batch(pairs, vocab: Vocabulary = VOCAB, length: int | None = None):
    """``(src, tgt_in, tgt_out)`` tensors for ``(ocr_text, gt_text)`` pairs."""
    src = pad_batch([vocab.encode(o) for o, _ in pairs], vocab.pad, length)
    tgt = [vocab.encode(g) for _, g in pairs]
    tgt_in = pad_batch([t[:-1] for t in tgt], vocab.pad, length)
    tgt_out = pad_batch([t[1:] for t in tgt], vocab.pad, length)
    return src, tgt_in, tgt_out


def build_model(config: CorrectionModelConfig, table: GlyphEmbeddingTable) -> CorrectionNet:
    """Seeded initialization followed by installing the frozen glyph table."""
    with torch.random.fork_rng():
        torch.manual_seed(config.seed)
        model = CorrectionNet(config)
    model.glyph.set_table(table)
    return model
