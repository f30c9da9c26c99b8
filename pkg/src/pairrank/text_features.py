"""Title text features: tokenization, structural statistics, and a binary
unigram vocabulary."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

N_STRUCTURAL = 4


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, strip leading and trailing
    non-alphanumeric characters, drop empties."""
    out = []
    for piece in text.lower().split():
        start, end = 0, len(piece)
        while start < end and not piece[start].isalnum():
            start += 1
        while end > start and not piece[end - 1].isalnum():
            end -= 1
        if end > start:
            out.append(piece[start:end])
    return out


def structural_features(title: str) -> np.ndarray:
    """[token count, character count, type/token ratio, punctuation density].

    Ratios with a zero denominator are defined as 0. Punctuation density is
    the share of characters that are neither alphanumeric nor whitespace.
    """
    tokens = tokenize(title)
    n_tokens = len(tokens)
    n_chars = len(title)
    ttr = len(set(tokens)) / n_tokens if n_tokens else 0.0
    n_punct = sum(1 for ch in title if not ch.isalnum() and not ch.isspace())
    punct_density = n_punct / n_chars if n_chars else 0.0
    return np.array([n_tokens, n_chars, ttr, punct_density], dtype=np.float64)


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("vocabulary contains duplicate tokens")

    def __len__(self) -> int:
        return len(self.tokens)

    def index(self) -> dict[str, int]:
        return {tok: i for i, tok in enumerate(self.tokens)}


def build_vocab(titles: list[str], min_df: int = 5) -> Vocabulary:
    """Tokens appearing in at least min_df distinct titles, ordered by
    descending document frequency then lexicographically. Indices are dense
    from 0."""
    df: dict[str, int] = {}
    for title in titles:
        for tok in set(tokenize(title)):
            df[tok] = df.get(tok, 0) + 1
    kept = [tok for tok, count in df.items() if count >= min_df]
    kept.sort(key=lambda tok: (-df[tok], tok))
    return Vocabulary(tuple(kept))


def unigram_features(title: str, vocab: Vocabulary,
                     index: dict[str, int] | None = None,
                     counts: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Sparse unigram presence over the vocabulary.

    Returns (indices, values) sorted by index. Values are binary presence by
    default; with counts=True they are occurrence counts instead.
    """
    if index is None:
        index = vocab.index()
    hits: dict[int, int] = {}
    for tok in tokenize(title):
        i = index.get(tok)
        if i is not None:
            hits[i] = hits.get(i, 0) + 1
    idx = np.array(sorted(hits), dtype=np.int64)
    if counts:
        val = np.array([hits[i] for i in idx], dtype=np.float64)
    else:
        val = np.ones(len(idx), dtype=np.float64)
    return idx, val
