"""Command-line entry point.

Exit codes: 0 success, 2 input/config error, 3 numeric divergence.
Results go to files under ``--out`` or to stdout; logs go to stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import corpus, metrics, tokenizer
from .checkpoint import Checkpoint
from .encoder import ModelConfig, ModelParams
from .errors import AdtextError, ConfigError, DivergedError, InputError, LabelError
from .tensor import log_softmax_np
from .train import TrainConfig, finetune, predict, predict_logits, pretrain_mlm, with_num_classes

log = logging.getLogger("adtext")


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    turkish_lowercase: bool = True
    train_fraction: float = 0.7
    vocab_size: int = 4000
    min_freq: int = 1
    max_seq: int = 64
    hidden_size: int = 64
    num_layers: int = 2
    num_heads: int = 4
    intermediate_size: int = 256
    dropout_rate: float = 0.1
    epochs: int = 10
    batch_size: int = 32
    learning_rate: float = 5e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    mask_rate: float = 0.15
    warmup_fraction: float = 0.1
    select_metric: str = "accuracy"
    format: str = "text"

    def validate(self) -> "RunConfig":
        if not 0 < self.train_fraction < 1:
            raise ConfigError("train_fraction must lie in (0, 1)")
        if self.min_freq < 1:
            raise ConfigError("min_freq must be >= 1")
        if self.vocab_size <= len(tokenizer.SPECIALS):
            raise ConfigError("vocab_size must exceed the number of special tokens")
        if self.format not in ("text", "markdown", "csv"):
            raise ConfigError(f"format must be text, markdown or csv, got {self.format!r}")
        self.model_config(self.vocab_size, 2)
        self.train_config()
        return self

    def model_config(self, vocab_size: int, num_classes: int) -> ModelConfig:
        return ModelConfig(self.hidden_size, self.num_layers, self.num_heads, self.max_seq, vocab_size,
                           self.intermediate_size, num_classes, self.dropout_rate)

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.epochs, self.batch_size, self.learning_rate, self.adam_beta1, self.adam_beta2,
                           self.adam_eps, self.mask_rate, self.warmup_fraction, self.seed, self.select_metric)

    def to_text(self) -> str:
        return "".join(f"{k} = {_fmt(v)}\n" for k, v in asdict(self).items())


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def _coerce(name: str, raw: str, kind: type):
    raw = raw.strip()
    try:
        if kind is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return kind(raw)
    except ValueError:
        raise ConfigError(f"invalid value for {name}: {raw!r}") from None


_FIELD_TYPES = {f.name: type(f.default) for f in fields(RunConfig)}


def parse_config_text(text: str, source: str = "config") -> dict:
    """``key = value`` lines; blank lines and ``#`` comments ignored."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        values[key] = _coerce(key, raw, _FIELD_TYPES[key])
    return values


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise InputError(f"no such config file: {path}")
        values.update(parse_config_text(path.read_text(encoding="utf-8"), str(path)))
    for name in _FIELD_TYPES:
        flag = getattr(args, name, None)
        if flag is not None:
            values[name] = flag
    return RunConfig(**values).validate()


# --------------------------------------------------------------------------
# shared steps
# --------------------------------------------------------------------------

def _out_dir(args) -> Path:
    if not args.out:
        raise InputError("--out is required for this command")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_config(out: Path, cfg: RunConfig) -> None:
    (out / "config.txt").write_text(cfg.to_text(), encoding="utf-8")


def _load_records(args, cfg: RunConfig) -> list[corpus.RawRecord]:
    if not args.data:
        raise InputError("--data is required for this command")
    records = corpus.load_corpus(args.data)
    prepared = corpus.prepare(records, cfg.turkish_lowercase)
    if not prepared:
        raise InputError(f"{args.data}: no text left after normalization")
    log.info("loaded %d records, %d after normalization and dedup", len(records), len(prepared))
    return prepared


def _vocab_for(args, cfg: RunConfig, texts: Sequence[str]) -> tokenizer.Vocabulary:
    if getattr(args, "vocab", None):
        path = Path(args.vocab)
        if not path.is_file():
            raise InputError(f"no such vocabulary file: {path}")
        return tokenizer.Vocabulary.load(path)
    return tokenizer.build_vocab(texts, cfg.vocab_size, cfg.min_freq)


def _write_report(out: Path, report: metrics.ClassReport, fmt: str, stem: str = "report") -> str:
    text = metrics.render_report(report, fmt)
    suffix = {"text": "txt", "markdown": "md", "csv": "csv"}[fmt]
    (out / f"{stem}.{suffix}").write_text(text, encoding="utf-8")
    return text


def _labels_csv(names: Sequence[str]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("id", "category"))
    writer.writerows(enumerate(names))
    return buf.getvalue()


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_build_vocab(args) -> int:
    cfg = resolve_config(args)
    records = _load_records(args, cfg)
    out = _out_dir(args)
    vocab = tokenizer.build_vocab([r.text for r in records], cfg.vocab_size, cfg.min_freq)
    vocab.save(out / "vocab.txt")
    _write_config(out, cfg)
    log.info("wrote %d tokens to %s", len(vocab), out / "vocab.txt")
    return 0


def cmd_pretrain(args) -> int:
    cfg = resolve_config(args)
    records = _load_records(args, cfg)
    out = _out_dir(args)
    texts = [r.text for r in records]
    vocab = _vocab_for(args, cfg, texts)
    names = corpus.LabelMap.from_names(r.category_name for r in records).names
    num_classes = max(2, len(names))
    mcfg = cfg.model_config(len(vocab), num_classes)
    model = Checkpoint(mcfg, vocab, ModelParams.initialize(mcfg, cfg.seed), (),
                       {"turkish_lowercase": cfg.turkish_lowercase})
    trained, trace = pretrain_mlm(texts, model, cfg.train_config())
    trained.save(out / "model.ckpt")
    vocab.save(out / "vocab.txt")
    (out / "pretrain_trace.csv").write_text(trace.to_csv(), encoding="utf-8")
    _write_config(out, cfg)
    return 0


def cmd_finetune(args) -> int:
    cfg = resolve_config(args)
    records = _load_records(args, cfg)
    out = _out_dir(args)
    label_map = corpus.LabelMap.from_names(r.category_name for r in records)
    if len(label_map) < 2:
        raise InputError("fine-tuning needs at least two categories")
    examples = corpus.to_examples(records, label_map)
    split = corpus.stratified_split(examples, cfg.train_fraction, cfg.seed, label_map.names)
    log.info("split: %d train / %d test", len(split.train), len(split.test))

    if getattr(args, "init", None):
        base = Checkpoint.load(args.init)
        if base.config.max_seq != cfg.max_seq or base.config.hidden_size != cfg.hidden_size:
            log.warning("using architecture from %s; config model sizes ignored", args.init)
        model = with_num_classes(base, len(label_map), label_map.names, cfg.seed)
        model.options.setdefault("turkish_lowercase", cfg.turkish_lowercase)
    else:
        vocab = _vocab_for(args, cfg, [ex.text for ex in split.train])
        mcfg = cfg.model_config(len(vocab), len(label_map))
        model = Checkpoint(mcfg, vocab, ModelParams.initialize(mcfg, cfg.seed), label_map.names,
                           {"turkish_lowercase": cfg.turkish_lowercase})

    try:
        best, trace = finetune(split, model, cfg.train_config())
    except DivergedError as exc:
        if exc.trace is not None:
            (out / "trace.csv").write_text(exc.trace.to_csv(), encoding="utf-8")
        _write_config(out, cfg)
        raise
    best.save(out / "model.ckpt")
    best.vocab.save(out / "vocab.txt")
    (out / "trace.csv").write_text(trace.to_csv(), encoding="utf-8")
    (out / "labels.csv").write_text(_labels_csv(label_map.names), encoding="utf-8")

    for part, data in (("test", split.test), ("train", split.train)):
        enc = [tokenizer.encode(ex.text, best.vocab, best.config.max_seq) for ex in data]
        cm = metrics.confusion([ex.label for ex in data], predict(enc, best.params), len(label_map), label_map.names)
        metrics.write_confusion_csv(cm, out / f"{'' if part == 'test' else 'train_'}confusion.csv")
        if part == "test":
            text = _write_report(out, metrics.build_report(cm), cfg.format)
    _write_config(out, cfg)
    sys.stdout.write(text)
    log.info("selected iteration %s", trace.selected_iteration)
    return 0


def cmd_evaluate(args) -> int:
    cfg = resolve_config(args)
    if not args.checkpoint:
        raise InputError("--checkpoint is required")
    ckpt = Checkpoint.load(args.checkpoint)
    lower = ckpt.options.get("turkish_lowercase", cfg.turkish_lowercase)
    records = _load_records(args, replace(cfg, turkish_lowercase=lower))
    known = {n: i for i, n in enumerate(ckpt.labels)}
    for r in records:
        if r.category_name not in known:
            raise LabelError(f"label {r.category_name!r} is not in the checkpoint's label set")
    enc = [tokenizer.encode(r.text, ckpt.vocab, ckpt.config.max_seq) for r in records]
    cm = metrics.confusion([known[r.category_name] for r in records], predict(enc, ckpt.params),
                           ckpt.config.num_classes, ckpt.labels)
    report = metrics.build_report(cm)
    text = metrics.render_report(report, cfg.format)
    if args.out:
        out = _out_dir(args)
        _write_report(out, report, cfg.format)
        metrics.write_confusion_csv(cm, out / "confusion.csv")
        _write_config(out, cfg)
    sys.stdout.write(text)
    for w in report.warnings:
        log.warning(w)
    return 0


def cmd_predict(args) -> int:
    cfg = resolve_config(args)
    if not args.checkpoint:
        raise InputError("--checkpoint is required")
    ckpt = Checkpoint.load(args.checkpoint)
    lower = ckpt.options.get("turkish_lowercase", cfg.turkish_lowercase)
    texts = list(args.text)
    if not texts:
        return 0
    enc = [tokenizer.encode(corpus.normalize(t, lower), ckpt.vocab, ckpt.config.max_seq) for t in texts]
    probs = np.exp(log_softmax_np(predict_logits(enc, ckpt.params).astype(np.float64)))
    names = ckpt.labels or tuple(str(i) for i in range(ckpt.config.num_classes))
    for text, row in zip(texts, probs):
        best = int(row.argmax())
        line = {"text": text, "label": best, "category": names[best],
                "probabilities": [float(p) for p in row]}
        sys.stdout.write(json.dumps(line, ensure_ascii=False) + "\n")
    if args.out:
        _write_config(_out_dir(args), cfg)
    return 0


def cmd_stats(args) -> int:
    cfg = resolve_config(args)
    if args.raw:
        if not args.data:
            raise InputError("--data is required for this command")
        records = corpus.load_corpus(args.data)
    else:
        records = _load_records(args, cfg)
    out = _out_dir(args)
    corpus.write_pairs_csv(out / "category_counts.csv", ("category", "count"), corpus.category_counts(records))
    corpus.write_pairs_csv(out / "word_counts.csv", ("word_count", "frequency"), corpus.word_count_histogram(records))
    _write_config(out, cfg)
    return 0


def cmd_report(args) -> int:
    cfg = resolve_config(args)
    if not args.confusion:
        raise InputError("--confusion is required")
    path = Path(args.confusion)
    if not path.is_file():
        raise InputError(f"no such file: {path}")
    cm = metrics.ConfusionMatrix.from_csv(path.read_text(encoding="utf-8"))
    report = metrics.build_report(cm)
    text = metrics.render_report(report, cfg.format)
    if args.out:
        out = _out_dir(args)
        _write_report(out, report, cfg.format)
        _write_config(out, cfg)
    sys.stdout.write(text)
    return 0


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------

def _bool_flag(value: str) -> bool:
    return _coerce("flag", value, bool)


def _shared(p: argparse.ArgumentParser) -> None:
    d = RunConfig()
    p.add_argument("--data", help="corpus file (.jsonl, or .csv with header id,category,text)")
    p.add_argument("--config", help="file of 'key = value' lines; flags override it")
    p.add_argument("--seed", type=int, help=f"master seed (default {d.seed})")
    p.add_argument("--out", help="output directory")
    p.add_argument("--train-fraction", dest="train_fraction", type=float,
                   help=f"stratified train share per class (default {d.train_fraction})")
    p.add_argument("--epochs", type=int, help=f"training iterations (default {d.epochs})")
    p.add_argument("--format", choices=("text", "markdown", "csv"), help=f"report format (default {d.format})")
    p.add_argument("--turkish-lowercase", dest="turkish_lowercase", type=_bool_flag, metavar="BOOL",
                   help="Turkish casing rules for I/İ (default true)")
    p.add_argument("--log-level", default="INFO")


def _model_flags(p: argparse.ArgumentParser) -> None:
    d = RunConfig()
    p.add_argument("--vocab", help="existing vocabulary file (skips vocabulary building)")
    p.add_argument("--vocab-size", dest="vocab_size", type=int, help=f"default {d.vocab_size}")
    p.add_argument("--min-freq", dest="min_freq", type=int, help=f"default {d.min_freq}")
    for name in ("max_seq", "hidden_size", "num_layers", "num_heads", "intermediate_size", "batch_size"):
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=int, help=f"default {getattr(d, name)}")
    for name in ("dropout_rate", "learning_rate", "mask_rate", "warmup_fraction"):
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=float, help=f"default {getattr(d, name)}")
    p.add_argument("--select-metric", dest="select_metric", choices=("accuracy", "weighted_f1"),
                   help=f"best-iteration criterion (default {d.select_metric})")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adtext", description="Transformer-encoder ad-text classification toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-vocab", help="build a WordPiece vocabulary from a corpus")
    _shared(p)
    p.add_argument("--vocab-size", dest="vocab_size", type=int, help="default 4000")
    p.add_argument("--min-freq", dest="min_freq", type=int, help="default 1")
    p.set_defaults(func=cmd_build_vocab)

    p = sub.add_parser("pretrain", help="masked-language-model pretraining from random init")
    _shared(p)
    _model_flags(p)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("finetune", help="split, fine-tune, and report on the test part")
    _shared(p)
    _model_flags(p)
    p.add_argument("--init", help="pretrained checkpoint to start from")
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("evaluate", help="classification report for a checkpoint on a labeled corpus")
    _shared(p)
    p.add_argument("--checkpoint")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="class probabilities for texts, one JSON line each")
    _shared(p)
    p.add_argument("--checkpoint")
    p.add_argument("text", nargs="*")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("stats", help="category counts and word-count histogram CSVs")
    _shared(p)
    p.add_argument("--raw", action="store_true", help="skip normalization and dedup")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("report", help="render a report from a confusion-matrix CSV")
    _shared(p)
    p.add_argument("--confusion")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.INFO),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except AdtextError as exc:
        print(f"adtext {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, UnicodeDecodeError) as exc:
        print(f"adtext {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
