"""Post-OCR correction network: dual convolutional encoders and a transformer decoder."""

from .ablation import ABLATION_MODES, AblationReport, ablate_glyph, run_glyph_ablation
from .decoding import Corrector, beam_decode, correct, greedy_decode
from .network import VOCAB, CorrectionModelConfig, CorrectionNet, Vocabulary, build_model, make_batch
from .training import ModelCheckpoint, TrainingReport, teacher_forced_loss, train_correction_model


def embed_contextual(text: str, model: CorrectionNet):
    """Contextual character vectors for BOS + text + EOS, shape ``(len(text) + 2, d_char)``."""
    import torch

    from .decoding import _check_length

    _check_length(model, text)
    with torch.no_grad():
        src = torch.tensor([model.vocab.encode(text)])
        return model.eval().embed_contextual(src)[0]


def embed_glyph_seq(text: str, model: CorrectionNet):
    """Glyph vectors for BOS + text + EOS, shape ``(len(text) + 2, d_glyph)``."""
    import torch

    with torch.no_grad():
        return model.embed_glyph(torch.tensor([model.vocab.encode(text)]))[0]


__all__ = [
    "ABLATION_MODES",
    "AblationReport",
    "CorrectionModelConfig",
    "CorrectionNet",
    "Corrector",
    "ModelCheckpoint",
    "TrainingReport",
    "VOCAB",
    "Vocabulary",
    "ablate_glyph",
    "beam_decode",
    "build_model",
    "correct",
    "embed_contextual",
    "embed_glyph_seq",
    "greedy_decode",
    "make_batch",
    "run_glyph_ablation",
    "teacher_forced_loss",
    "train_correction_model",
]
