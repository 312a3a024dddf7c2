"""Command-line entry point: ``postocr <group> <command> [options]``.

Results go to stdout as JSON, logs to stderr. Exit codes: 0 success,
1 usage error, 2 data or format error, 3 runtime failure (divergence, network).

Settings resolve as built-in defaults, then the ``--config`` file, then flags.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from . import glyphset
from .corpus import CorrectionPair, NoiseConfig, load_pairs, sample_sentences, synthesize_noise, write_pairs
from .correction_model import (
    CorrectionModelConfig,
    Corrector,
    ModelCheckpoint,
    run_glyph_ablation,
    train_correction_model,
)
from .errors import (
    DataError,
    DivergenceError,
    FormatError,
    LMError,
    MissingGlyphError,
    PostOCRError,
    ShapeMismatchError,
)
from .glyph_embedding import (
    GlyphClassifierConfig,
    GlyphEmbeddingTable,
    build_embedding_table,
    confusion_matrix,
    load_classifier,
    save_classifier,
    separation_score,
    train_glyph_classifier,
)
from .lm_baseline import CorrectorEndpointConfig, MockConfig, MockLMServer, run_baseline_eval
from .metrics import MetricReport, evaluate_corpus
from .text import ALPHANUMERICS, normalize

logger = logging.getLogger("postocr")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# -- run configuration ---------------------------------------------------------


def _section(cls, data: dict, name: str):
    if not isinstance(data, dict):
        raise FormatError(f"config section {name!r} must be an object")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise FormatError(f"unknown keys in config section {name!r}: {unknown}")
    data = {k: tuple(v) if isinstance(v, list) else v for k, v in data.items()}
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"invalid config section {name!r}: {exc}") from exc


@dataclass
class RunConfig:
    """The four config sections; every field has the owning module's default."""

    glyph: GlyphClassifierConfig = field(default_factory=GlyphClassifierConfig)
    corpus: NoiseConfig = field(default_factory=NoiseConfig)
    model: CorrectionModelConfig = field(default_factory=CorrectionModelConfig)
    baseline: CorrectorEndpointConfig = field(default_factory=CorrectorEndpointConfig)
    explicit: frozenset = frozenset()

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise FormatError("config file must hold a JSON object")
        types = {f.name: f.default_factory for f in fields(cls) if f.name != "explicit"}
        unknown = sorted(set(data) - set(types))
        if unknown:
            raise FormatError(f"unknown config sections: {unknown}")
        sections = {name: _section(types[name], data[name], name) for name in data}
        explicit = frozenset(f"{name}.{key}" for name in data for key in data[name])
        return cls(**sections, explicit=explicit)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise FileNotFoundError(f"config file not found: {path}") from exc
        except ValueError as exc:
            raise FormatError(f"config file {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return {f.name: asdict(getattr(self, f.name)) for f in fields(self) if f.name != "explicit"}

    def model_for(self, table: GlyphEmbeddingTable) -> CorrectionModelConfig:
        """The model section with ``d_glyph`` following the table unless set explicitly."""
        if "model.d_glyph" in self.explicit:
            return self.model
        return replace(self.model, d_glyph=table.dim)

    def with_overrides(self, section: str, **values) -> "RunConfig":
        values = {k: v for k, v in values.items() if v is not None}
        if not values:
            return self
        try:
            return replace(self, **{section: replace(getattr(self, section), **values)})
        except ValueError as exc:
            raise FormatError(f"invalid {section} setting: {exc}") from exc


def _resolve_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if args.seed is not None:
        for section in ("glyph", "corpus", "model"):
            cfg = cfg.with_overrides(section, seed=args.seed)
    return cfg


# -- I/O helpers ----------------------------------------------------------------


def _read_lines(path: str) -> list[str]:
    if path == "-":
        text = sys.stdin.read()
    else:
        if not Path(path).is_file():
            raise FileNotFoundError(f"input file not found: {path}")
        text = Path(path).read_text(encoding="utf-8")
    return text.split("\n")[:-1] if text.endswith("\n") else text.split("\n") if text else []


def _write_text(path: str | None, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        Path(path).write_text(text, encoding="utf-8")


def _emit(payload) -> None:
    sys.stdout.write(json.dumps(payload, sort_keys=True) + "\n")
    sys.stdout.flush()


def _load_table(path: str) -> GlyphEmbeddingTable:
    if not Path(path).is_file():
        raise FileNotFoundError(f"glyph table not found: {path}")
    return GlyphEmbeddingTable.load(path)


def _load_checkpoint(path: str) -> ModelCheckpoint:
    if not Path(path).is_file():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    return ModelCheckpoint.load(path)


# -- glyph stage ------------------------------------------------------------------

_DIR_NAMES = {"0123456789": "digit", "abcdefghijklmnopqrstuvwxyz": "lower", "ABCDEFGHIJKLMNOPQRSTUVWXYZ": "upper"}


def _dir_name(label: glyphset.CharClass) -> str:
    if label.is_garbage:
        return "garbage"
    prefix = next(p for chars, p in _DIR_NAMES.items() if label.value in chars)
    return f"{prefix}_{label.value}"


def _resolve_fonts(count: int, fonts_dir: str | None) -> list[str]:
    names = glyphset.LATIN_FONTS[:count]
    if fonts_dir is None:
        return glyphset.bundled_fonts(count)
    root = Path(fonts_dir)
    if not root.is_dir():
        raise MissingGlyphError(f"fonts directory not found: {fonts_dir}")
    missing = [n for n in names if not (root / n).is_file()]
    if missing:
        raise MissingGlyphError(f"fonts missing from {fonts_dir}: {missing}")
    return [str(root / n) for n in names]


def render_dataset(out: Path, fonts: Sequence[str], per_char: int, garbage: int, seed: int) -> dict:
    """Render glyphs and garbage into ``<out>/<class_dir>/<n>.png``."""
    images = []
    for ch in ALPHANUMERICS:
        for f_idx, font in enumerate(fonts):
            spec = glyphset.default_augmentation(font)
            for k in range(per_char):
                images.append(glyphset.render_glyph(ch, spec, glyphset.item_seed(seed, f_idx, k)))
    images.extend(glyphset.render_garbage_images(garbage, seed))
    counts: dict[str, int] = {}
    for img in images:
        name = _dir_name(img.label)
        k = counts.get(name, 0)
        counts[name] = k + 1
        target = out / name
        target.mkdir(parents=True, exist_ok=True)
        Image.fromarray(np.round(img.pixels * 255).astype(np.uint8), mode="L").save(target / f"{k:05d}.png")
    return {"out": str(out), "images": len(images), "classes": len(counts), "garbage": counts.get("garbage", 0)}


def _split(data: str, split: float, seed: int):
    images = glyphset.load_external_images(data)
    return glyphset.stratified_split(images, split, seed)


def glyph_train(data: str, out: str, config: GlyphClassifierConfig, split: float, init: str | None = None) -> dict:
    train, val = _split(data, split, config.seed)
    init_model = load_classifier(init) if init else None
    model, report = train_glyph_classifier(train, val, config, init=init_model)
    save_classifier(model, out)
    result = report.to_dict()
    result.update(model=out, fingerprint=model.fingerprint(), train_images=len(train), val_images=len(val))
    result["separation"] = separation_score(model, val)
    return result


def glyph_export(model_path: str, data: str, out: str, split: float, seed: int, partition: str, sidecar: str | None) -> dict:
    model = load_classifier(model_path)
    if partition == "all":
        images = glyphset.load_external_images(data)
    else:
        train, val = _split(data, split, seed)
        images = train if partition == "train" else val
    table = build_embedding_table(model, images, {"partition": partition})
    table.save(out)
    if sidecar:
        Path(sidecar).write_bytes(table.to_sidecar())
    return {"table": out, "dim": table.dim, "fingerprint": table.fingerprint, "entries": len(table.entries)}


# -- corpus / model stages ------------------------------------------------------------


def noise_pairs(texts: Sequence[str], table: GlyphEmbeddingTable | None, config: NoiseConfig) -> list[CorrectionPair]:
    if table is None:
        if config.p_sub > 0:
            raise DataError("--table is required when p_sub > 0")
        n = len(ALPHANUMERICS)
        confusion = (np.ones((n, n)) - np.eye(n)) / (n - 1)
    else:
        confusion = confusion_matrix(table, config.temperature)
    return synthesize_noise(texts, confusion, config)


def _correct_lines(ckpt: ModelCheckpoint, table: GlyphEmbeddingTable, lines: Sequence[str], beam: int) -> list[str]:
    corrector = Corrector(ckpt, table)
    return corrector.correct_batch([normalize(line) for line in lines], beam_width=beam)


def _eval_files(ref: str, hyp: str) -> MetricReport:
    refs, hyps = _read_lines(ref), _read_lines(hyp)
    if len(refs) != len(hyps):
        raise ShapeMismatchError(f"{ref} has {len(refs)} lines but {hyp} has {len(hyps)}")
    return evaluate_corpus(list(zip(hyps, refs)), word_level=True)


# -- end-to-end smoke -------------------------------------------------------------

SMOKE_GLYPH = GlyphClassifierConfig(widths=(8, 16, 32, 32), embed_dim=32, epochs=3, batch_size=64, learning_rate=0.05)
SMOKE_MODEL = CorrectionModelConfig(
    d_char=16, d_glyph=32, enc_layers=1, enc_kernel=3, enc_width=32, d_model=32, dec_layers=1, dec_heads=2,
    max_len=40, warmup_steps=10, batch_size=16, steps=60, log_every=30, val_limit=20, learning_rate=3e-3,
)


def _stage(name: str):
    def wrap(fn):
        def run(*a, **kw):
            logger.info("smoke stage: %s", name)
            try:
                return fn(*a, **kw)
            except (PostOCRError, OSError) as exc:
                exc.stage = name
                raise

        return run

    return wrap


def pipeline_smoke(workdir: str | Path, seed: int = 0, fonts_dir: str | None = None) -> MetricReport:
    """render, train glyphs, export, noise, train corrector, evaluate: all at toy scale.

    Artifacts land in ``workdir``; the final report is also written to
    ``workdir/report.json``.
    """
    work = Path(workdir)
    work.mkdir(parents=True, exist_ok=True)
    glyph_cfg = replace(SMOKE_GLYPH, seed=seed)
    model_cfg = replace(SMOKE_MODEL, seed=seed)

    fonts = _stage("render")(_resolve_fonts)(4, fonts_dir)
    _stage("render")(render_dataset)(work / "glyphs", fonts, 4, 60, seed)
    _stage("glyph-train")(glyph_train)(str(work / "glyphs"), str(work / "glyph.bin"), glyph_cfg, 0.75)
    _stage("export-table")(glyph_export)(
        str(work / "glyph.bin"), str(work / "glyphs"), str(work / "table.json"), 0.75, seed, "train", None
    )
    table = GlyphEmbeddingTable.load(work / "table.json")

    @_stage("noise")
    def noise():
        texts = sample_sentences(300, seed=seed, max_words=3)
        pairs = noise_pairs(texts, table, NoiseConfig(seed=seed))
        parts = {"train": pairs[:240], "val": pairs[240:270], "test": pairs[270:]}
        for name, part in parts.items():
            write_pairs(part, work / f"{name}.tsv")
        return parts

    parts = noise()

    @_stage("model-train")
    def model_train():
        ckpt, report = train_correction_model(parts["train"], parts["val"], table, model_cfg)
        ckpt.save(work / "ckpt.bin")
        (work / "train_log.jsonl").write_text(report.to_jsonl())
        return ckpt

    ckpt = model_train()

    @_stage("eval")
    def final_eval():
        test = parts["test"]
        hyps = Corrector(ckpt, table).correct_batch([p.ocr_text for p in test])
        return evaluate_corpus([(h, p.gt_text) for h, p in zip(hyps, test)], word_level=True)

    report = final_eval()
    (work / "report.json").write_text(report.to_json() + "\n")
    return report


# -- command handlers -------------------------------------------------------------------


def cmd_glyph_render(args, cfg: RunConfig):
    seed = cfg.glyph.seed
    fonts = [glyphset.font_path(f) for f in args.font] if args.font else _resolve_fonts(args.fonts, args.fonts_dir)
    return render_dataset(Path(args.out), fonts, args.per_char, args.garbage, seed)


def cmd_glyph_train(args, cfg: RunConfig):
    cfg = cfg.with_overrides(
        "glyph",
        epochs=args.epochs,
        open_set_mode=args.open_set_mode,
        unfreeze_policy=args.unfreeze,
        embed_dim=args.embed_dim,
        learning_rate=args.lr,
    )
    return glyph_train(args.data, args.out, cfg.glyph, args.split, args.init)


def cmd_glyph_export(args, cfg: RunConfig):
    return glyph_export(args.model, args.data, args.out, args.split, cfg.glyph.seed, args.partition, args.sidecar)


def cmd_glyph_confusion(args, cfg: RunConfig):
    cfg = cfg.with_overrides("corpus", temperature=args.temperature)
    table = _load_table(args.table)
    conf = confusion_matrix(table, cfg.corpus.temperature)
    top = {}
    for i, ch in enumerate(ALPHANUMERICS):
        order = np.argsort(-conf[i], kind="stable")[: args.top]
        top[ch] = [[ALPHANUMERICS[j], round(float(conf[i, j]), 6)] for j in order]
    payload = {"characters": ALPHANUMERICS, "temperature": cfg.corpus.temperature, "top": top}
    if args.out:
        Path(args.out).write_text(json.dumps({"characters": ALPHANUMERICS, "matrix": conf.tolist()}))
        payload["matrix_file"] = args.out
    else:
        payload["matrix"] = conf.tolist()
    return payload


def cmd_corpus_noise(args, cfg: RunConfig):
    cfg = cfg.with_overrides(
        "corpus", p_sub=args.p_sub, p_del=args.p_del, p_ins=args.p_ins, temperature=args.temperature
    )
    if args.sample is not None:
        texts = sample_sentences(args.sample, seed=cfg.corpus.seed, max_words=args.max_words)
    elif args.input:
        texts = [normalize(line) for line in _read_lines(args.input)]
        texts = [t for t in texts if t]
    else:
        raise UsageError("corpus noise: one of --in or --sample is required")
    table = _load_table(args.table) if args.table else None
    pairs = noise_pairs(texts, table, cfg.corpus)
    if args.out in (None, "-"):
        write_pairs(pairs, sys.stdout)
        return None
    write_pairs(pairs, args.out)
    return {"out": args.out, "pairs": len(pairs), "noise": asdict(cfg.corpus)}


def _model_overrides(args, cfg: RunConfig) -> RunConfig:
    return cfg.with_overrides(
        "model", steps=args.steps, batch_size=args.batch_size, learning_rate=args.lr, max_len=args.max_len
    )


def cmd_model_train(args, cfg: RunConfig):
    cfg = _model_overrides(args, cfg)
    table = _load_table(args.table)
    model_cfg = cfg.model_for(table)
    ckpt, report = train_correction_model(load_pairs(args.train), load_pairs(args.val), table, model_cfg)
    ckpt.save(args.out)
    if args.log:
        Path(args.log).write_text(report.to_jsonl())
    return {
        "checkpoint": args.out,
        "final_loss": report.final_loss,
        "records": report.records,
        "skipped": report.skipped,
        "table_fingerprint": table.fingerprint,
    }


def cmd_model_correct(args, cfg: RunConfig):
    ckpt = _load_checkpoint(args.ckpt)
    table = _load_table(args.table)
    lines = _read_lines(args.input)
    hyps = _correct_lines(ckpt, table, lines, args.beam)
    text = "".join(h + "\n" for h in hyps)
    if args.out in (None, "-"):
        _write_text(None, text)
        return None
    _write_text(args.out, text)
    return {"out": args.out, "lines": len(hyps)}


def cmd_model_ablate(args, cfg: RunConfig):
    cfg = _model_overrides(args, cfg)
    table = _load_table(args.table)
    model_cfg = cfg.model_for(table)
    seeds = [int(s) for s in args.seeds.split(",")]
    report = run_glyph_ablation(
        load_pairs(args.train), load_pairs(args.val), load_pairs(args.test), table, model_cfg, seeds, args.label
    )
    logger.info("\n%s", report.table())
    metrics = ("cer_paper", "wer_standard")
    return {
        "runs": report.to_dict(),
        "median": {arm: {m: report.median(arm, m) for m in metrics} for arm in report.runs},
        "relative_reduction": {m: report.relative_reduction(m) for m in metrics},
        "table": report.table(),
    }


def cmd_eval(args, cfg: RunConfig):
    if args.pairs:
        pairs = load_pairs(args.pairs)
        return evaluate_corpus([(p.ocr_text, p.gt_text) for p in pairs], word_level=True).to_dict()
    if not (args.ref and args.hyp):
        raise UsageError("eval: give --ref and --hyp, or --pairs")
    return _eval_files(args.ref, args.hyp).to_dict()


def cmd_baseline_eval(args, cfg: RunConfig):
    cfg = cfg.with_overrides(
        "baseline",
        base_url=args.base_url,
        model_name=args.model_name,
        timeout=args.timeout,
        max_retries=args.max_retries,
        concurrency=args.concurrency,
    )
    pairs = load_pairs(args.pairs)
    if not args.mock:
        return run_baseline_eval(pairs, cfg.baseline).to_dict()
    endpoint = cfg.baseline
    # the mock ignores credentials; supply a placeholder so the client runs unchanged
    os.environ.setdefault(endpoint.auth_token_env_var, "mock-token")
    with MockLMServer(MockConfig.load(args.mock), endpoint.prompt_template) as server:
        return run_baseline_eval(pairs, replace(endpoint, base_url=server.base_url)).to_dict()


def cmd_smoke(args, cfg: RunConfig):
    seed = args.seed if args.seed is not None else 0
    return pipeline_smoke(args.workdir, seed=seed, fonts_dir=args.fonts_dir).to_dict()


# -- parser -------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    def global_flags(p, default):
        # subparsers must not reset values given before the subcommand
        p.add_argument("--config", default=default, help="JSON run config with glyph/corpus/model/baseline sections")
        p.add_argument("--seed", type=int, default=default, help="seed for every stochastic step")
        p.add_argument("--quiet", action="store_true", default=False if default is None else default, help="only log warnings and errors")

    common = _Parser(add_help=False)
    global_flags(common, argparse.SUPPRESS)
    parser = _Parser(prog="postocr", description=__doc__.splitlines()[0])
    global_flags(parser, None)
    groups = parser.add_subparsers(dest="group", required=True, parser_class=_Parser)

    def sub(group_parsers, name, handler, help_text):
        p = group_parsers.add_parser(name, help=help_text, parents=[common])
        p.set_defaults(handler=handler)
        return p

    glyph = groups.add_parser("glyph", help="glyph images, classifier and embedding table").add_subparsers(
        dest="command", required=True, parser_class=_Parser
    )
    p = sub(glyph, "render", cmd_glyph_render, "render a labelled glyph image directory")
    p.add_argument("--out", required=True)
    p.add_argument("--fonts", type=int, default=4, help="number of bundled Latin fonts")
    p.add_argument("--font", action="append", help="explicit font file (repeatable)")
    p.add_argument("--fonts-dir")
    p.add_argument("--per-char", type=int, default=40, help="augmented renders per font and character")
    p.add_argument("--garbage", type=int, default=1200, help="Hebrew/Hangul garbage renders")

    p = sub(glyph, "train", cmd_glyph_train, "train the open-set glyph classifier")
    p.add_argument("--data", required=True, help="image directory (class-name layout)")
    p.add_argument("--out", required=True)
    p.add_argument("--split", type=float, default=0.8)
    p.add_argument("--init", help="classifier file whose backbone initializes training")
    p.add_argument("--epochs", type=int)
    p.add_argument("--open-set-mode", choices=("garbage_class", "threshold_softmax"))
    p.add_argument("--unfreeze", choices=("last2", "last4", "all"))
    p.add_argument("--embed-dim", type=int)
    p.add_argument("--lr", type=float)

    p = sub(glyph, "export-table", cmd_glyph_export, "average embeddings per character into a table")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--sidecar", help="also write the binary float32 table")
    p.add_argument("--split", type=float, default=0.8)
    p.add_argument("--partition", choices=("train", "val", "all"), default="train")

    p = sub(glyph, "confusion", cmd_glyph_confusion, "similarity-driven confusion matrix")
    p.add_argument("--table", required=True)
    p.add_argument("--temperature", type=float)
    p.add_argument("--top", type=int, default=3)
    p.add_argument("--out", help="write the full matrix here instead of stdout")

    corpus = groups.add_parser("corpus", help="synthetic OCR noise").add_subparsers(
        dest="command", required=True, parser_class=_Parser
    )
    p = sub(corpus, "noise", cmd_corpus_noise, "noise clean lines into an ocr/gt pair file")
    p.add_argument("--in", dest="input", help="clean text, one line per text ('-' for stdin)")
    p.add_argument("--sample", type=int, help="generate this many sentences instead of reading --in")
    p.add_argument("--max-words", type=int, default=5)
    p.add_argument("--table", help="glyph table (required when p_sub > 0)")
    p.add_argument("--out", help="pair TSV (default stdout)")
    p.add_argument("--p-sub", type=float)
    p.add_argument("--p-del", type=float)
    p.add_argument("--p-ins", type=float)
    p.add_argument("--temperature", type=float)

    model = groups.add_parser("model", help="correction model").add_subparsers(
        dest="command", required=True, parser_class=_Parser
    )

    def model_flags(p):
        p.add_argument("--table", required=True)
        p.add_argument("--steps", type=int)
        p.add_argument("--batch-size", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--max-len", type=int)

    p = sub(model, "train", cmd_model_train, "train the correction model")
    p.add_argument("--train", required=True)
    p.add_argument("--val", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--log", help="write per-interval records as JSON lines")
    model_flags(p)

    p = sub(model, "correct", cmd_model_correct, "correct text lines")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--table", required=True)
    p.add_argument("--in", dest="input", default="-")
    p.add_argument("--out")
    p.add_argument("--beam", type=int, default=1)

    p = sub(model, "ablate", cmd_model_ablate, "real vs random frozen glyph table")
    p.add_argument("--train", required=True)
    p.add_argument("--val", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--label", default="synthetic")
    model_flags(p)

    p = groups.add_parser("eval", help="score hypotheses against references", parents=[common])
    p.set_defaults(handler=cmd_eval)
    p.add_argument("--ref")
    p.add_argument("--hyp")
    p.add_argument("--pairs", help="pair TSV; scores ocr_text against gt_text")

    baseline = groups.add_parser("baseline", help="external language-model corrector").add_subparsers(
        dest="command", required=True, parser_class=_Parser
    )
    p = sub(baseline, "eval", cmd_baseline_eval, "correct pairs through a chat-completion endpoint")
    p.add_argument("--pairs", required=True)
    p.add_argument("--mock", help="mock mapping JSON; runs an in-process mock server")
    p.add_argument("--base-url")
    p.add_argument("--model-name")
    p.add_argument("--timeout", type=float)
    p.add_argument("--max-retries", type=int)
    p.add_argument("--concurrency", type=int)

    p = groups.add_parser("smoke", help="tiny end-to-end pipeline run", parents=[common])
    p.set_defaults(handler=cmd_smoke)
    p.add_argument("--workdir", required=True)
    p.add_argument("--fonts-dir", help="directory holding the Latin font files")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )
    try:
        cfg = _resolve_config(args)
        result = args.handler(args, cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (DivergenceError, LMError) as exc:
        print(_describe(exc), file=sys.stderr)
        return 3
    except (DataError, OSError, ValueError) as exc:
        print(_describe(exc), file=sys.stderr)
        return 2
    if result is not None:
        _emit(result)
    return 0


def _describe(exc: BaseException) -> str:
    stage = getattr(exc, "stage", None)
    prefix = f"error in stage {stage}: " if stage else "error: "
    return f"{prefix}{type(exc).__name__}: {exc}"


if __name__ == "__main__":
    sys.exit(main())
