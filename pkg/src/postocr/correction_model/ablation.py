"""Glyph ablation: the same training setup with real vs. random frozen glyph vectors."""

from __future__ import annotations

import statistics
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from ..corpus import CorrectionPair
from ..glyph_embedding import GlyphEmbeddingTable
from ..metrics import MetricReport, evaluate_corpus
from .decoding import Corrector
from .network import CorrectionModelConfig
from .training import train_correction_model

ABLATION_MODES = ("real_table", "random_frozen")


def ablate_glyph(table: GlyphEmbeddingTable, mode: str, seed: int = 0) -> GlyphEmbeddingTable:
    """Return the glyph table for one ablation arm.

    ``random_frozen`` draws isotropic random directions and gives them the real
    table's row norms in a seeded random order, so the norm distribution is
    unchanged while all visual similarity structure is destroyed.
    """
    if mode not in ABLATION_MODES:
        raise ValueError(f"mode must be one of {ABLATION_MODES}")
    if mode == "real_table":
        return table
    rng = np.random.default_rng([seed, 0xAB1A])
    real = table.matrix()
    directions = rng.normal(size=real.shape)
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    norms = rng.permutation(np.linalg.norm(real, axis=1))
    meta = {"ablation": "random_frozen", "seed": seed, "source_table": table.fingerprint}
    return GlyphEmbeddingTable.from_matrix(directions * norms[:, None], meta)


@dataclass
class AblationReport:
    """Per-seed and median test metrics for each arm."""

    runs: dict[str, list[MetricReport]] = field(default_factory=dict)
    label: str = "synthetic"

    def median(self, arm: str, metric: str) -> float:
        return statistics.median(getattr(r, metric) for r in self.runs[arm])

    def relative_reduction(self, metric: str) -> float:
        """Fractional improvement of the glyph arm over the random arm (positive is better)."""
        base = self.median("random_frozen", metric)
        return (base - self.median("real_table", metric)) / base if base else 0.0

    def table(self) -> str:
        lines = [f"{'OCR Output':<12}{'Glyph':<8}{'WER':>8}{'CER':>8}"]
        for arm, glyph in (("random_frozen", "False"), ("real_table", "True")):
            lines.append(
                f"{self.label:<12}{glyph:<8}{self.median(arm, 'wer_standard'):>8.4f}{self.median(arm, 'cer_paper'):>8.4f}"
            )
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {arm: [r.to_dict() for r in reports] for arm, reports in self.runs.items()}


def run_glyph_ablation(
    train_pairs: Sequence[CorrectionPair],
    val_pairs: Sequence[CorrectionPair],
    test_pairs: Sequence[CorrectionPair],
    table: GlyphEmbeddingTable,
    config: CorrectionModelConfig,
    seeds: Sequence[int] = (0, 1, 2),
    label: str = "synthetic",
) -> AblationReport:
    """Train both arms once per seed under identical budgets and score them on ``test_pairs``."""
    report = AblationReport(label=label)
    for arm in ABLATION_MODES:
        report.runs[arm] = []
        for seed in seeds:
            arm_table = ablate_glyph(table, arm, seed)
            ckpt, _ = train_correction_model(train_pairs, val_pairs, arm_table, replace(config, seed=seed))
            hyps = Corrector(ckpt, arm_table).correct_batch([p.ocr_text for p in test_pairs])
            report.runs[arm].append(evaluate_corpus([(h, p.gt_text) for h, p in zip(hyps, test_pairs)]))
    return report
