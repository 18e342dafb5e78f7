"""MLM masking, Adam, and the pretraining / fine-tuning loops."""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import tensor as T
from .checkpoint import Checkpoint
from .corpus import DatasetSplit
from .encoder import ModelParams, _truncated_normal, INIT_STD, classify_tensor, mlm_tensor
from .errors import ConfigError, DivergedError, NumericError
from .metrics import accuracy, build_report, confusion
from .tensor import Parameter
from .tokenizer import MASK_ID, SPECIALS, Encoding, Vocabulary, encode

log = logging.getLogger(__name__)

EVAL_BATCH = 256

# stream tags for np.random.default_rng([seed, tag, ...])
_SHUFFLE, _DROPOUT, _MASK, _INIT = 1, 2, 3, 4


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 32
    learning_rate: float = 5e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    mask_rate: float = 0.15
    warmup_fraction: float = 0.1
    seed: int = 0
    select_metric: str = "accuracy"

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be > 0")
        if not 0 < self.mask_rate < 1:
            raise ConfigError("mask_rate must lie in (0, 1)")
        if not 0 <= self.adam_beta1 < 1 or not 0 <= self.adam_beta2 < 1:
            raise ConfigError("Adam betas must lie in [0, 1)")
        if not self.adam_eps > 0:
            raise ConfigError("adam_eps must be > 0")
        if not 0 <= self.warmup_fraction < 1:
            raise ConfigError("warmup_fraction must lie in [0, 1)")
        if self.seed < 0:
            raise ConfigError("seed must be unsigned")
        if self.select_metric not in ("accuracy", "weighted_f1"):
            raise ConfigError(f"select_metric must be accuracy or weighted_f1, got {self.select_metric!r}")


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    train_loss: float
    train_accuracy: float
    test_accuracy: float
    test_weighted_f1: float


@dataclass
class TrainTrace:
    select_metric: str = "accuracy"
    records: list[IterationRecord] = field(default_factory=list)

    @property
    def selected_iteration(self) -> int | None:
        """Iteration maximizing the selection metric; earliest wins ties."""
        if not self.records:
            return None
        attr = "test_accuracy" if self.select_metric == "accuracy" else "test_weighted_f1"
        best = max(self.records, key=lambda r: (getattr(r, attr), -r.iteration))
        return best.iteration

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["iteration", "train_loss", "train_acc", "test_acc", "test_weighted_f1"])
        for r in self.records:
            writer.writerow([r.iteration, f"{r.train_loss:.8f}", f"{r.train_accuracy:.6f}",
                             f"{r.test_accuracy:.6f}", f"{r.test_weighted_f1:.6f}"])
        return out.getvalue()


@dataclass
class PretrainTrace:
    initial_loss: float
    losses: list[float] = field(default_factory=list)

    def to_csv(self) -> str:
        lines = ["iteration,mlm_loss", f"0,{self.initial_loss:.8f}"]
        lines += [f"{i},{loss:.8f}" for i, loss in enumerate(self.losses, start=1)]
        return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# masking
# --------------------------------------------------------------------------

def mask_tokens(
    encoding: Encoding, vocab: Vocabulary, mask_rate: float, seed
) -> tuple[Encoding, list[int], list[int]]:
    """Select non-special positions with probability ``mask_rate``; replace 80/10/10.

    Selected tokens become [MASK] with probability 0.8, a random non-special
    vocabulary id with probability 0.1, and stay unchanged otherwise.
    ``seed`` is anything ``np.random.default_rng`` accepts.
    """
    rng = np.random.default_rng(seed)
    ids = list(encoding.ids)
    eligible = [i for i in range(encoding.true_length) if ids[i] >= len(SPECIALS)]
    n = len(eligible)
    selected = rng.random(n) < mask_rate
    kind = rng.random(n)
    n_regular = len(vocab) - len(SPECIALS)
    random_ids = rng.integers(len(SPECIALS), len(vocab), n) if n_regular > 0 else np.full(n, MASK_ID)

    positions, originals = [], []
    for j, pos in enumerate(eligible):
        if not selected[j]:
            continue
        positions.append(pos)
        originals.append(ids[pos])
        if kind[j] < 0.8:
            ids[pos] = MASK_ID
        elif kind[j] < 0.9:
            ids[pos] = int(random_ids[j])
    masked = Encoding(tuple(ids), encoding.attention_mask, encoding.true_length)
    return masked, positions, originals


# --------------------------------------------------------------------------
# optimizer
# --------------------------------------------------------------------------

class Adam:
    """Adam with bias correction. Moments are kept per parameter name."""

    def __init__(self, params: Iterable[Parameter], lr: float = 5e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = {p.name: np.zeros_like(p.data) for p in params}
        self.v = {p.name: np.zeros_like(p.data) for p in params}
        self.t = 0

    @classmethod
    def from_config(cls, params: ModelParams, config: TrainConfig) -> "Adam":
        return cls(params, config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_eps)

    def step(self, lr: float | None = None) -> None:
        """Apply one update from the accumulated gradients, then zero them."""
        lr = self.lr if lr is None else lr
        for p in self.params:
            if p.grad is not None and not np.isfinite(p.grad).all():
                raise NumericError(f"non-finite gradient in {p.name}")
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p in self.params:
            if p.grad is None:
                g = np.zeros_like(p.data)
            else:
                g = p.grad
            m, v = self.m[p.name], self.v[p.name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data -= (lr / bc1) * m / (np.sqrt(v / bc2) + self.eps)
            p.zero_grad()


def lr_at(step: int, total_steps: int, config: TrainConfig) -> float:
    """Linear warmup over the first ``warmup_fraction`` of steps, then linear decay."""
    warm = math.ceil(config.warmup_fraction * total_steps)
    if step < warm:
        return config.learning_rate * (step + 1) / warm
    return config.learning_rate * max(0, total_steps - step) / max(1, total_steps - warm)


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------

def _stack(encodings: Sequence[Encoding]) -> tuple[np.ndarray, np.ndarray]:
    ids = np.array([e.ids for e in encodings], dtype=np.int64)
    mask = np.array([e.attention_mask for e in encodings], dtype=np.int64)
    return ids, mask


def predict_logits(encodings: Sequence[Encoding], params: ModelParams, batch_size: int = EVAL_BATCH) -> np.ndarray:
    ids, mask = _stack(encodings)
    chunks = [classify_tensor(ids[i:i + batch_size], mask[i:i + batch_size], params).data
              for i in range(0, len(encodings), batch_size)]
    return np.concatenate(chunks, axis=0)


def predict(encodings: Sequence[Encoding], params: ModelParams) -> np.ndarray:
    return predict_logits(encodings, params).argmax(axis=1)


def with_num_classes(model: Checkpoint, num_classes: int, labels: Sequence[str], seed: int = 0) -> Checkpoint:
    """Copy of ``model`` with a freshly initialized classifier for ``num_classes`` classes."""
    from dataclasses import replace

    config = replace(model.config, num_classes=num_classes)
    arrays = {n: a.copy() for n, a in model.params.arrays().items()}
    if model.config.num_classes != num_classes or tuple(labels) != tuple(model.labels):
        rng = np.random.default_rng([seed, _INIT])
        arrays["classifier.weight"] = _truncated_normal(rng, (config.hidden_size, num_classes), INIT_STD)
        arrays["classifier.bias"] = np.zeros(num_classes)
    params = ModelParams.from_arrays(config, arrays, model.params.dtype)
    return Checkpoint(config, model.vocab, params, tuple(labels), dict(model.options))


# --------------------------------------------------------------------------
# fine-tuning
# --------------------------------------------------------------------------

def finetune(
    split: DatasetSplit, model: Checkpoint, config: TrainConfig
) -> tuple[Checkpoint, TrainTrace]:
    """Train the classification head and encoder; keep the best iteration.

    One iteration is a full pass over ``split.train`` followed by evaluation on
    ``split.test``. ``model`` is not modified.
    """
    if not split.train or not split.test:
        raise ConfigError("fine-tuning needs non-empty train and test sets")
    if config.epochs < 1:
        raise ConfigError("fine-tuning needs epochs >= 1")
    mcfg = model.config
    labels_train = np.array([ex.label for ex in split.train], dtype=np.int64)
    labels_test = np.array([ex.label for ex in split.test], dtype=np.int64)
    if max(labels_train.max(), labels_test.max()) >= mcfg.num_classes:
        raise ConfigError(f"labels exceed the model's {mcfg.num_classes} classes")

    train_enc = [encode(ex.text, model.vocab, mcfg.max_seq) for ex in split.train]
    test_enc = [encode(ex.text, model.vocab, mcfg.max_seq) for ex in split.test]
    train_ids, train_mask = _stack(train_enc)

    params = model.params.copy(np.float32)
    opt = Adam.from_config(params, config)
    n = len(train_enc)
    steps_per_epoch = math.ceil(n / config.batch_size)
    total_steps = steps_per_epoch * config.epochs
    trace = TrainTrace(config.select_metric)
    best_score = -1.0
    best_params = params.copy()
    step = 0

    for epoch in range(1, config.epochs + 1):
        order = np.random.default_rng([config.seed, _SHUFFLE, epoch]).permutation(n)
        losses = []
        for j in range(steps_per_epoch):
            idx = order[j * config.batch_size:(j + 1) * config.batch_size]
            drop_rng = np.random.default_rng([config.seed, _DROPOUT, epoch, j])
            logits = classify_tensor(train_ids[idx], train_mask[idx], params, drop_rng)
            loss = T.cross_entropy(logits, labels_train[idx])
            value = float(loss.data)
            if not math.isfinite(value):
                raise DivergedError(f"loss became {value} at iteration {epoch}, step {j}", trace)
            loss.backward()
            try:
                opt.step(lr_at(step, total_steps, config))
            except NumericError as exc:
                raise DivergedError(str(exc), trace) from None
            losses.append(value)
            step += 1

        train_pred = predict(train_enc, params)
        test_cm = confusion(labels_test, predict(test_enc, params), mcfg.num_classes)
        test_report = build_report(test_cm)
        record = IterationRecord(
            iteration=epoch,
            train_loss=float(np.mean(losses)),
            train_accuracy=float((train_pred == labels_train).mean()),
            test_accuracy=accuracy(test_cm),
            test_weighted_f1=test_report.weighted[2],
        )
        trace.records.append(record)
        log.info("iteration %d: loss %.4f train_acc %.4f test_acc %.4f test_wf1 %.4f", epoch,
                 record.train_loss, record.train_accuracy, record.test_accuracy, record.test_weighted_f1)
        score = record.test_accuracy if config.select_metric == "accuracy" else record.test_weighted_f1
        if score > best_score:
            best_score = score
            best_params = params.copy()

    options = dict(model.options, selected_iteration=trace.selected_iteration)
    best = Checkpoint(mcfg, model.vocab, best_params, model.labels, options)
    return best, trace


# --------------------------------------------------------------------------
# MLM pretraining
# --------------------------------------------------------------------------

def _mlm_batch(encodings, indices, vocab, mask_rate, seed, epoch):
    masked, positions, targets = [], [], []
    for i in indices:
        enc, pos, orig = mask_tokens(encodings[i], vocab, mask_rate, [seed, _MASK, epoch, int(i)])
        masked.append(enc)
        positions.append(pos)
        targets.extend(orig)
    ids, mask = _stack(masked)
    return ids, mask, positions, np.array(targets, dtype=np.int64)


def mlm_loss(encodings, params, vocab, mask_rate, seed, epoch=0, batch_size=EVAL_BATCH) -> float:
    """Eval-mode masked-token cross-entropy, averaged over every masked position."""
    total, count = 0.0, 0
    for start in range(0, len(encodings), batch_size):
        idx = range(start, min(start + batch_size, len(encodings)))
        ids, mask, positions, targets = _mlm_batch(encodings, idx, vocab, mask_rate, seed, epoch)
        if targets.size == 0:
            continue
        logits = mlm_tensor(ids, mask, positions, params).data
        logp = T.log_softmax_np(logits.astype(np.float64))
        total += -logp[np.arange(targets.size), targets].sum()
        count += targets.size
    return total / count if count else float("nan")


def mlm_topk_accuracy(model: Checkpoint, texts: Sequence[str], mask_rate: float, seed: int, k: int = 5) -> float:
    """Fraction of masked positions whose original token is among the top-k predictions."""
    encodings = [encode(t, model.vocab, model.config.max_seq) for t in texts]
    hits, count = 0, 0
    for start in range(0, len(encodings), EVAL_BATCH):
        idx = range(start, min(start + EVAL_BATCH, len(encodings)))
        ids, mask, positions, targets = _mlm_batch(encodings, idx, model.vocab, mask_rate, seed, 0)
        if targets.size == 0:
            continue
        logits = mlm_tensor(ids, mask, positions, model.params).data
        topk = np.argsort(-logits, axis=1, kind="stable")[:, :k]
        hits += int((topk == targets[:, None]).any(axis=1).sum())
        count += targets.size
    return hits / count if count else 0.0


def pretrain_mlm(
    texts: Sequence[str], model: Checkpoint, config: TrainConfig
) -> tuple[Checkpoint, PretrainTrace]:
    """Masked-language-model pretraining with fresh masks every iteration."""
    if not texts:
        raise ConfigError("pretraining needs at least one text")
    vocab, mcfg = model.vocab, model.config
    encodings = [encode(t, vocab, mcfg.max_seq) for t in texts]
    params = model.params.copy(np.float32)
    trace = PretrainTrace(mlm_loss(encodings, params, vocab, config.mask_rate, config.seed, epoch=1))
    log.info("initial MLM loss %.4f (ln V = %.4f)", trace.initial_loss, math.log(len(vocab)))

    opt = Adam.from_config(params, config)
    n = len(encodings)
    steps_per_epoch = math.ceil(n / config.batch_size)
    total_steps = steps_per_epoch * config.epochs
    step = 0
    for epoch in range(1, config.epochs + 1):
        order = np.random.default_rng([config.seed, _SHUFFLE, epoch]).permutation(n)
        loss_sum, count = 0.0, 0
        for j in range(steps_per_epoch):
            idx = order[j * config.batch_size:(j + 1) * config.batch_size]
            ids, mask, positions, targets = _mlm_batch(encodings, idx, vocab, config.mask_rate, config.seed, epoch)
            if targets.size:
                drop_rng = np.random.default_rng([config.seed, _DROPOUT, epoch, j])
                logits = mlm_tensor(ids, mask, positions, params, drop_rng)
                loss = T.cross_entropy(logits, targets)
                value = float(loss.data)
                if not math.isfinite(value):
                    raise DivergedError(f"MLM loss became {value} at iteration {epoch}", trace)
                loss.backward()
                try:
                    opt.step(lr_at(step, total_steps, config))
                except NumericError as exc:
                    raise DivergedError(str(exc), trace) from None
                loss_sum += value * targets.size
                count += targets.size
            step += 1
        trace.losses.append(loss_sum / count if count else float("nan"))
        log.info("iteration %d: MLM loss %.4f", epoch, trace.losses[-1])

    return Checkpoint(mcfg, vocab, params, model.labels, dict(model.options)), trace
