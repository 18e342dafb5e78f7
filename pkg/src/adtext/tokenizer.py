"""WordPiece vocabulary construction, encoding and decoding."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ConfigError, InvalidIdError

PAD, UNK, CLS, SEP, MASK = "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"
SPECIALS = (PAD, UNK, CLS, SEP, MASK)
PAD_ID, UNK_ID, CLS_ID, SEP_ID, MASK_ID = range(5)
CONTINUATION = "##"
MAX_WORD_CHARS = 100


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple[str, ...]
    id_of: dict[str, int] = field(compare=False, repr=False)

    def __post_init__(self):
        if self.tokens[:5] != SPECIALS:
            raise ConfigError("vocabulary must start with the five special tokens")
        if len(self.id_of) != len(self.tokens):
            raise ConfigError("vocabulary contains duplicate tokens")

    @classmethod
    def from_tokens(cls, tokens: Iterable[str]) -> "Vocabulary":
        tokens = tuple(tokens)
        return cls(tokens, {t: i for i, t in enumerate(tokens)})

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.id_of

    def to_text(self) -> str:
        return "".join(t + "\n" for t in self.tokens)

    @classmethod
    def from_text(cls, text: str) -> "Vocabulary":
        return cls.from_tokens(text.splitlines())

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))


@dataclass(frozen=True)
class Encoding:
    ids: tuple[int, ...]
    attention_mask: tuple[int, ...]
    true_length: int

    def __len__(self) -> int:
        return len(self.ids)


def _merge(a: str, b: str) -> str:
    return a + b[len(CONTINUATION):]


def build_vocab(texts: Iterable[str], vocab_size: int, min_freq: int = 1) -> Vocabulary:
    """Build a WordPiece-form vocabulary by greedy frequent-pair merging.

    Characters seen at least ``min_freq`` times are added in the forms they occur in
    (word-initial ``c`` and/or continuation ``##c``), sorted. Pairs of adjacent
    symbols are then merged by descending frequency, ties broken by the
    lexicographically smallest pair, until ``vocab_size`` tokens exist or no pair
    reaches ``min_freq``.
    """
    word_counts = Counter(w for t in texts for w in t.split() if len(w) <= MAX_WORD_CHARS)

    char_freq: Counter[str] = Counter()
    for word, n in word_counts.items():
        for ch in word:
            char_freq[ch] += n
    alphabet = {ch for ch, n in char_freq.items() if n >= min_freq}

    initial: set[str] = set()
    for word in word_counts:
        if word[0] in alphabet:
            initial.add(word[0])
        initial.update(CONTINUATION + ch for ch in word[1:] if ch in alphabet)
    if vocab_size < len(SPECIALS) + len(initial):
        raise ConfigError(
            f"vocab_size {vocab_size} cannot hold {len(SPECIALS)} specials plus {len(initial)} alphabet tokens"
        )

    tokens = list(SPECIALS) + sorted(initial)
    known = set(tokens)

    # words containing a rare character can never be fully represented; leave them out
    splits = {
        w: [w[0]] + [CONTINUATION + ch for ch in w[1:]]
        for w in word_counts
        if all(ch in alphabet for ch in w)
    }

    while len(tokens) < vocab_size:
        pair_freq: Counter[tuple[str, str]] = Counter()
        for word, symbols in splits.items():
            n = word_counts[word]
            for pair in zip(symbols, symbols[1:]):
                pair_freq[pair] += n
        if not pair_freq:
            break
        best, freq = min(pair_freq.items(), key=lambda kv: (-kv[1], kv[0]))
        if freq < min_freq:
            break
        merged = _merge(*best)
        for word, symbols in splits.items():
            if len(symbols) < 2:
                continue
            out = []
            i = 0
            while i < len(symbols):
                if i + 1 < len(symbols) and (symbols[i], symbols[i + 1]) == best:
                    out.append(merged)
                    i += 2
                else:
                    out.append(symbols[i])
                    i += 1
            splits[word] = out
        if merged not in known:
            known.add(merged)
            tokens.append(merged)

    return Vocabulary.from_tokens(tokens)


def wordpiece(word: str, vocab: Vocabulary) -> list[str]:
    """Greedy longest-match-first split of one word; [UNK] if it cannot be covered."""
    if len(word) > MAX_WORD_CHARS:
        return [UNK]
    pieces = []
    start = 0
    while start < len(word):
        end = len(word)
        piece = None
        while end > start:
            cand = word[start:end]
            if start > 0:
                cand = CONTINUATION + cand
            if cand in vocab:
                piece = cand
                break
            end -= 1
        if piece is None:
            return [UNK]
        pieces.append(piece)
        start = end
    return pieces


def tokenize(text: str, vocab: Vocabulary) -> list[str]:
    return [p for w in text.split() for p in wordpiece(w, vocab)]


def encode(text: str, vocab: Vocabulary, max_seq: int) -> Encoding:
    if max_seq < 2:
        raise ConfigError(f"max_seq must be >= 2, got {max_seq}")
    body = [vocab.id_of[p] for p in tokenize(text, vocab)][: max_seq - 2]
    ids = [CLS_ID, *body, SEP_ID]
    n = len(ids)
    pad = max_seq - n
    return Encoding(tuple(ids + [PAD_ID] * pad), (1,) * n + (0,) * pad, n)


def decode(ids: Sequence[int], vocab: Vocabulary) -> str:
    words: list[str] = []
    size = len(vocab)
    for i in ids:
        i = int(i)
        if not 0 <= i < size:
            raise InvalidIdError(f"token id {i} outside vocabulary of size {size}")
        if i < len(SPECIALS):
            continue
        tok = vocab.tokens[i]
        if tok.startswith(CONTINUATION) and words:
            words[-1] += tok[len(CONTINUATION):]
        else:
            words.append(tok)
    return " ".join(words)
