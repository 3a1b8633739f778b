"""Character-shingle vectorization of records.

A record is rendered to a single string (selected fields joined by a
reserved separator) and replaced by the bag of its length-k contiguous
substrings.  Bags are plain Counters keyed by the shingle string; after a
Vocabulary assigns dense integer token-ids they become sparse id->weight
maps, optionally IDF-weighted.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .records import RESERVED_PAD, RESERVED_SEPARATOR, Corpus, Record

DEFAULT_FIELDS = ("name", "date_of_death", "governorate", "sex")


def record_string(record: Record, fields=DEFAULT_FIELDS) -> str:
    """Join the selected field values, in order, with the reserved separator."""
    if not fields:
        raise ValueError("parameter error: fields must be non-empty")
    return RESERVED_SEPARATOR.join(getattr(record, f) for f in fields)


def shingle(s: str, k: int) -> Counter:
    """Bag of all length-k contiguous substrings of s, with multiplicity.

    A string shorter than k becomes the single token s right-padded to
    length k with the reserved pad character, so every input produces a
    non-empty bag.
    """
    if k < 1:
        raise ValueError(f"parameter error: shingle length must be >= 1, got {k}")
    if len(s) < k:
        return Counter({s + RESERVED_PAD * (k - len(s)): 1})
    return Counter(s[i:i + k] for i in range(len(s) - k + 1))


@dataclass
class Vocabulary:
    """Dense token-id assignment plus per-token document frequencies."""

    token_ids: dict[str, int] = field(default_factory=dict)
    df: list[int] = field(default_factory=list)
    n_records: int = 0

    @property
    def size(self) -> int:
        return len(self.token_ids)

    def encode(self, bag: Counter) -> dict[int, int]:
        """Map a string-keyed bag to a token-id-keyed bag."""
        out = {}
        for token, count in bag.items():
            tid = self.token_ids.get(token)
            if tid is None:
                raise ValueError(f"vocabulary error: unknown token {token!r}")
            out[tid] = count
        return out


def build_vocabulary(corpus: Corpus, k: int, fields=DEFAULT_FIELDS) -> Vocabulary:
    """Single pass over the corpus: ids in first-encounter order, df counts."""
    vocab = Vocabulary(n_records=len(corpus))
    ids = vocab.token_ids
    df = vocab.df
    for record in corpus:
        for token in set(shingle(record_string(record, fields), k)):
            tid = ids.get(token)
            if tid is None:
                ids[token] = len(df)
                df.append(1)
            else:
                df[tid] += 1
    return vocab


def idf_weight(bag: dict[int, float], vocab: Vocabulary) -> dict[int, float]:
    """Reweight counts by ln(N / df); tokens present in every record drop out."""
    n = vocab.n_records
    out = {}
    for tid, count in bag.items():
        if not 0 <= tid < vocab.size:
            raise ValueError(f"vocabulary error: unknown token id {tid}")
        d = vocab.df[tid]
        if d == n:
            continue
        out[tid] = count * math.log(n / d)
    return out


def save_vocabulary(vocab: Vocabulary, path) -> None:
    """Dump as token_id<TAB>token<TAB>df lines."""
    with open(path, "w", encoding="utf-8") as fh:
        for token, tid in sorted(vocab.token_ids.items(), key=lambda kv: kv[1]):
            fh.write(f"{tid}\t{token}\t{vocab.df[tid]}\n")


@dataclass
class TokenMatrix:
    """CSR layout of per-record token ids (and weights) for batched hashing.

    Row i owns ids[offsets[i]:offsets[i+1]]; ids are unique within a row.
    weights parallels ids (counts, or IDF weights after reweight()).
    """

    ids: np.ndarray                 # uint64, flat
    offsets: np.ndarray             # int64, len n+1
    weights: np.ndarray             # float64, flat
    vocab: Vocabulary

    @property
    def n(self) -> int:
        return len(self.offsets) - 1

    def row(self, i: int) -> np.ndarray:
        return self.ids[self.offsets[i]:self.offsets[i + 1]]

    def row_weights(self, i: int) -> np.ndarray:
        return self.weights[self.offsets[i]:self.offsets[i + 1]]

    def row_bag(self, i: int) -> dict[int, float]:
        return dict(zip(self.row(i).tolist(), self.row_weights(i).tolist()))


def tokenize_corpus(corpus: Corpus, k: int, fields=DEFAULT_FIELDS,
                    vocab: Vocabulary | None = None, idf: bool = False) -> TokenMatrix:
    """Shingle every record and encode against a (possibly shared) vocabulary.

    With idf=True the weights column holds count * ln(N/df) and zero-weight
    tokens are dropped from the row entirely, mirroring idf_weight().
    """
    if vocab is None:
        vocab = build_vocabulary(corpus, k, fields)
    ids_parts, weight_parts, offsets = [], [], [0]
    n = vocab.n_records
    total = 0
    for record in corpus:
        bag = vocab.encode(shingle(record_string(record, fields), k))
        if idf:
            bag = {tid: c * math.log(n / vocab.df[tid])
                   for tid, c in bag.items() if vocab.df[tid] != n}
        tids = np.fromiter(bag.keys(), dtype=np.uint64, count=len(bag))
        ws = np.fromiter(bag.values(), dtype=np.float64, count=len(bag))
        ids_parts.append(tids)
        weight_parts.append(ws)
        total += len(bag)
        offsets.append(total)
    flat_ids = np.concatenate(ids_parts) if ids_parts else np.empty(0, dtype=np.uint64)
    flat_w = np.concatenate(weight_parts) if weight_parts else np.empty(0, dtype=np.float64)
    return TokenMatrix(flat_ids, np.asarray(offsets, dtype=np.int64), flat_w, vocab)
