"""Loading, normalizing, deduplicating and splitting labeled ad texts."""

from __future__ import annotations

import csv
import json
import unicodedata
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyCorpusError, InputError, InsufficientClassSizeError, LabelError, MalformedRecordError

FIELDS = ("id", "category", "text")


@dataclass(frozen=True)
class RawRecord:
    id: str
    category_name: str
    text: str


@dataclass(frozen=True)
class LabeledExample:
    text: str
    label: int


@dataclass(frozen=True)
class LabelMap:
    names: tuple[str, ...]
    index: dict[str, int] = field(compare=False, repr=False)

    @classmethod
    def from_names(cls, names: Iterable[str]) -> "LabelMap":
        ordered = tuple(sorted(set(names)))
        return cls(ordered, {n: i for i, n in enumerate(ordered)})

    def __len__(self) -> int:
        return len(self.names)

    def id_of(self, name: str) -> int:
        try:
            return self.index[name]
        except KeyError:
            raise LabelError(f"unknown label {name!r}") from None


@dataclass
class DatasetSplit:
    train: list[LabeledExample]
    test: list[LabeledExample]
    seed: int
    train_fraction: float


def load_corpus(path: str | Path, format: str | None = None) -> list[RawRecord]:
    """Read records from a JSONL or CSV file, in file order.

    ``format`` defaults to the file suffix (``.csv`` means CSV, anything else JSONL).
    """
    path = Path(path)
    if format is None:
        format = "csv" if path.suffix.lower() == ".csv" else "jsonl"
    if format not in ("jsonl", "csv"):
        raise InputError(f"unsupported corpus format {format!r}")
    if not path.is_file():
        raise InputError(f"no such file: {path}")

    records = _load_csv(path) if format == "csv" else _load_jsonl(path)
    if not records:
        raise EmptyCorpusError(f"empty corpus: {path}")
    return records


def _make_record(obj: dict, line: int) -> RawRecord:
    for key in FIELDS:
        if key not in obj or obj[key] is None:
            raise MalformedRecordError(f"missing field {key!r}", line)
    text = str(obj["text"])
    category = str(obj["category"])
    if not text.strip():
        raise MalformedRecordError("empty text", line)
    if not category.strip():
        raise MalformedRecordError("empty category", line)
    return RawRecord(str(obj["id"]), category, text)


def _load_jsonl(path: Path) -> list[RawRecord]:
    records = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecordError(f"invalid JSON ({exc.msg})", lineno) from None
            if not isinstance(obj, dict):
                raise MalformedRecordError("record is not an object", lineno)
            records.append(_make_record(obj, lineno))
    return records


def _load_csv(path: Path) -> list[RawRecord]:
    records = []
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return []
        missing = [k for k in FIELDS if k not in reader.fieldnames]
        if missing:
            raise MalformedRecordError(f"header lacks field(s) {', '.join(missing)}", 1)
        for row in reader:
            # reader.line_num is the physical line where the record ended
            records.append(_make_record(row, reader.line_num))
    return records


def _is_punct_or_symbol(ch: str) -> bool:
    return unicodedata.category(ch)[0] in "PS"


def normalize(text: str, turkish_lowercase: bool = True) -> str:
    """Lowercase, replace punctuation/symbol codepoints with spaces, squeeze whitespace."""
    if turkish_lowercase:
        text = text.replace("I", "ı").replace("İ", "i")
    text = text.lower()
    text = "".join(" " if _is_punct_or_symbol(ch) else ch for ch in text)
    return " ".join(text.split())


def normalize_records(records: Iterable[RawRecord], turkish_lowercase: bool = True) -> list[RawRecord]:
    return [RawRecord(r.id, r.category_name, normalize(r.text, turkish_lowercase)) for r in records]


def dedup(records: Sequence[RawRecord]) -> list[RawRecord]:
    """Keep the first record of every (text, category) pair."""
    seen = set()
    out = []
    for r in records:
        key = (r.text, r.category_name)
        if key in seen:
            continue
        seen.add(key)
        out.append(r)
    return out


def to_examples(records: Iterable[RawRecord], label_map: LabelMap) -> list[LabeledExample]:
    return [LabeledExample(r.text, label_map.id_of(r.category_name)) for r in records]


def prepare(records: Sequence[RawRecord], turkish_lowercase: bool = True) -> list[RawRecord]:
    """normalize then dedup; records whose text normalizes to nothing are dropped."""
    normed = [r for r in normalize_records(records, turkish_lowercase) if r.text]
    return dedup(normed)


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def stratified_split(
    examples: Sequence[LabeledExample],
    train_fraction: float,
    seed: int,
    label_names: Sequence[str] | None = None,
) -> DatasetSplit:
    """Per-class seeded shuffle; the first round(f * N_c) of each class go to train.

    Both sides keep the input order of their members.
    """
    if not 0.0 < train_fraction < 1.0:
        raise InputError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    by_class: dict[int, list[int]] = defaultdict(list)
    for i, ex in enumerate(examples):
        by_class[ex.label].append(i)

    train_idx: list[int] = []
    for label in sorted(by_class):
        members = by_class[label]
        if len(members) < 2:
            name = label_names[label] if label_names is not None else str(label)
            raise InsufficientClassSizeError(name, len(members))
        rng = np.random.default_rng([seed, label])
        order = rng.permutation(len(members))
        n_train = _round_half_up(train_fraction * len(members))
        train_idx.extend(members[j] for j in order[:n_train])

    in_train = np.zeros(len(examples), dtype=bool)
    in_train[train_idx] = True
    train = [ex for ex, t in zip(examples, in_train) if t]
    test = [ex for ex, t in zip(examples, in_train) if not t]
    return DatasetSplit(train, test, seed, train_fraction)


def category_counts(records: Iterable[RawRecord]) -> list[tuple[str, int]]:
    counts = Counter(r.category_name for r in records)
    return sorted(counts.items())


def word_count_histogram(records: Iterable[RawRecord]) -> list[tuple[int, int]]:
    counts = Counter(len(r.text.split()) for r in records)
    return sorted(counts.items())


def write_pairs_csv(path: str | Path, header: tuple[str, str], rows: Iterable[tuple]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
