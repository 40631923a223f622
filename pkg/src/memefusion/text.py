"""Caption cleaning, whitespace vocabulary, and fixed-length encoding."""
from __future__ import annotations

import unicodedata
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

PAD, UNK, CLS, SEP = "[PAD]", "[UNK]", "[CLS]", "[SEP]"
SPECIAL_TOKENS = (PAD, UNK, CLS, SEP)
PAD_ID, UNK_ID, CLS_ID, SEP_ID = 0, 1, 2, 3
MAX_LEN = 128


def _keep(ch: str) -> bool:
    # letters, digits, and combining marks (Tamil vowel signs are category M)
    return unicodedata.category(ch)[0] in "LMN"


def clean_caption(text: str, stopwords: Iterable[str] = ()) -> str:
    """Strip punctuation and symbols, collapse whitespace, drop stopwords. Case is preserved."""
    text = unicodedata.normalize("NFC", text)
    chars = [ch if _keep(ch) else (" " if ch.isspace() else "") for ch in text]
    stop = set(stopwords)
    return " ".join(tok for tok in "".join(chars).split() if tok not in stop)


def load_stopwords(path) -> frozenset[str]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return frozenset(line.strip() for line in lines if line.strip())


class Vocabulary:
    """Immutable token -> id map with the four reserved ids first."""

    def __init__(self, tokens: Iterable[str], min_freq: int = 1):
        self._itos = list(SPECIAL_TOKENS)
        for tok in tokens:
            if tok not in SPECIAL_TOKENS:
                self._itos.append(tok)
        self._stoi = {tok: i for i, tok in enumerate(self._itos)}
        if len(self._stoi) != len(self._itos):
            raise ValueError("duplicate tokens in vocabulary")
        self.min_freq = min_freq

    def __len__(self) -> int:
        return len(self._itos)

    def __contains__(self, token: str) -> bool:
        return token in self._stoi

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self._itos == other._itos

    def id(self, token: str) -> int:
        return self._stoi.get(token, UNK_ID)

    def token(self, idx: int) -> str:
        return self._itos[idx]

    def items(self):
        return list(self._stoi.items())

    def save(self, path) -> None:
        lines = [f"{tok}\t{i}\n" for i, tok in enumerate(self._itos)]
        Path(path).write_text("".join(lines), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        pairs = []
        for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            if not line:
                continue
            tok, sep, idx = line.rpartition("\t")
            if not sep or not idx.isdigit():
                raise ValueError(f"{path}:{n}: expected 'token<TAB>id', got {line!r}")
            pairs.append((int(idx), tok))
        pairs.sort()
        if [i for i, _ in pairs] != list(range(len(pairs))):
            raise ValueError(f"{path}: vocabulary ids are not dense from 0")
        if tuple(tok for _, tok in pairs[: len(SPECIAL_TOKENS)]) != SPECIAL_TOKENS:
            raise ValueError(f"{path}: reserved tokens must occupy ids 0-3")
        return cls(tok for _, tok in pairs[len(SPECIAL_TOKENS) :])


def build_vocab(corpus: list[str], min_freq: int = 1) -> Vocabulary:
    """Tokens with count >= min_freq, by descending count then lexicographically."""
    if not corpus:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    counts = Counter(tok for line in corpus for tok in line.split())
    kept = sorted((tok for tok, c in counts.items() if c >= min_freq), key=lambda t: (-counts[t], t))
    return Vocabulary(kept, min_freq=min_freq)


@dataclass(frozen=True)
class TokenSequence:
    ids: np.ndarray
    attention_mask: np.ndarray
    original_length: int


def encode(text: str, vocab: Vocabulary, max_len: int = MAX_LEN) -> TokenSequence:
    """[CLS] tokens [SEP] then padding; the caption head is kept on truncation."""
    if max_len < 2:
        raise ValueError("max_len must leave room for [CLS] and [SEP]")
    tokens = text.split()
    body = [vocab.id(t) for t in tokens[: max_len - 2]]
    ids = [CLS_ID, *body, SEP_ID]
    real = len(ids)
    ids += [PAD_ID] * (max_len - real)
    mask = np.zeros(max_len, dtype=np.int64)
    mask[:real] = 1
    return TokenSequence(np.asarray(ids, dtype=np.int64), mask, len(tokens) + 2)


def decode(ids, vocab: Vocabulary) -> str:
    return " ".join(vocab.token(int(i)) for i in ids if int(i) not in (PAD_ID, CLS_ID, SEP_ID))
