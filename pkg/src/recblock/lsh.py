"""Minwise hashing, densified one-permutation hashing, and banded blocking.

Three signature families share one contract: a signature is K*L unsigned
64-bit slots, and for random seeds the probability that two records agree on
a slot approximates their (weighted) Jaccard similarity.  Slots are grouped
into L bands of K; records sharing any full band become candidate pairs.

The one-permutation scheme hashes every token once, keeps the minimum hash
per bin, and fills empty bins by borrowing from the nearest non-empty bin to
the right (circularly), adding a fixed offset constant per step so borrowed
values from different distances cannot collide.  This costs one hash
evaluation per token plus one densification sweep, against K*L evaluations
per token for the classical family.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .hashing import MASK64, derive_seed, mix64, splitmix64, to_unit

MODES = ("classical-minhash", "doph", "weighted-doph")

# Purpose tags: independent salts derived from one scheme seed.
_TAG_DOPH = 0x441F4A1D5C7E9B21
_TAG_CLASSICAL = 0x9D2C5680A3B1E06F
_TAG_SAMPLE = 0x1B873593CC9E2D51
_TAG_BAND = 0x85EBCA6BC2B2AE35
_TAG_SENTINEL = 0xE6546B64D1B54A32

_BAND_INIT = np.uint64(0x27D4EB2F165667C5)

#: Reserved signature value for records whose weighted sample came up empty.
SENTINEL = np.uint64(0xFFFFFFFFFFFFFFFF)

# Running count of 64-bit token-hash evaluations, for complexity assertions.
_hash_calls = 0


def reset_hash_calls() -> None:
    global _hash_calls
    _hash_calls = 0


def hash_calls() -> int:
    return _hash_calls


def _count_hashes(n: int) -> None:
    global _hash_calls
    _hash_calls += int(n)


@dataclass(frozen=True)
class HashScheme:
    """(K, L)-parameterized signature scheme: K slots per band, L bands."""

    K: int
    L: int
    seed: int
    mode: str = "doph"

    def __post_init__(self):
        if self.K < 1 or self.L < 1:
            raise ValueError(f"parameter error: K and L must be >= 1, got K={self.K}, L={self.L}")
        if self.mode not in MODES:
            raise ValueError(f"parameter error: unknown mode {self.mode!r}, expected one of {MODES}")
        if self.K * self.L > 1 << 63:
            raise ValueError("parameter error: K*L exceeds half the 64-bit hash range")

    @property
    def num_bins(self) -> int:
        return self.K * self.L


# ---------------------------------------------------------------------------
# Similarities
# ---------------------------------------------------------------------------

def jaccard(a: Iterable, b: Iterable) -> float:
    """|a & b| / |a | b|; 1.0 when both sets are empty, 0.0 when one is."""
    sa, sb = set(a), set(b)
    if not sa and not sb:
        return 1.0
    return len(sa & sb) / len(sa | sb)


def weighted_jaccard(x: dict, y: dict) -> float:
    """sum(min) / sum(max) over the union of supports; 1.0 for two empty bags."""
    total_min = 0.0
    total_max = 0.0
    for key in x.keys() | y.keys():
        xv = x.get(key, 0.0)
        yv = y.get(key, 0.0)
        if xv < 0 or yv < 0:
            raise ValueError(f"domain error: negative weight for token {key!r}")
        if xv < yv:
            total_min += xv
            total_max += yv
        else:
            total_min += yv
            total_max += xv
    if total_max == 0.0:
        return 1.0
    return total_min / total_max


# ---------------------------------------------------------------------------
# Token hashing
# ---------------------------------------------------------------------------

def _as_token_array(tokens) -> np.ndarray:
    if isinstance(tokens, np.ndarray):
        arr = tokens.astype(np.uint64, copy=False)
    else:
        arr = np.fromiter((int(t) for t in tokens), dtype=np.uint64)
    return np.unique(arr)


def _token_hashes(arr: np.ndarray, salt: int) -> np.ndarray:
    _count_hashes(arr.size)
    return splitmix64(arr ^ np.uint64(salt))


# ---------------------------------------------------------------------------
# Classical minwise hashing: k independent seeded hash functions
# ---------------------------------------------------------------------------

def minhash_classical(tokens, scheme: HashScheme) -> np.ndarray:
    """Signature slot j = min over tokens of the j-th seeded 64-bit hash."""
    if scheme.mode != "classical-minhash":
        raise ValueError(f"parameter error: scheme mode is {scheme.mode!r}, expected 'classical-minhash'")
    arr = _as_token_array(tokens)
    if arr.size == 0:
        raise ValueError("empty set error: classical minhash needs at least one token")
    k = scheme.num_bins
    salts = splitmix64(np.uint64(derive_seed(scheme.seed, _TAG_CLASSICAL)) + np.arange(k, dtype=np.uint64))
    sig = np.empty(k, dtype=np.uint64)
    # Bound the (tokens x hash-functions) working set to ~4M entries.
    step = max(1, (1 << 22) // max(arr.size, 1))
    for start in range(0, k, step):
        chunk = salts[start:start + step]
        mat = splitmix64(arr[:, None] ^ chunk[None, :])
        _count_hashes(arr.size * chunk.size)
        sig[start:start + step] = mat.min(axis=0)
    return sig


# ---------------------------------------------------------------------------
# Densified one-permutation hashing
# ---------------------------------------------------------------------------

def _offset_constant(k: int) -> np.uint64:
    return np.uint64((1 << 63) // k)


def _densify(bins: np.ndarray, mins: np.ndarray, k: int) -> np.ndarray:
    """Fill a sparse (sorted non-empty bin -> min value) map to k dense slots.

    Empty slot j takes value(source) + C * steps, where source is the nearest
    non-empty bin at or after j (wrapping), C = 2**63 // k.  Works entirely in
    wrap-around uint64 arithmetic.
    """
    c = _offset_constant(k)
    b = bins.astype(np.uint64, copy=False)
    anchored = mins + c * b                       # value + C*bin, so slot j gets anchored - C*j
    owners = np.empty(bins.size + 1, dtype=np.uint64)
    owners[:-1] = anchored
    owners[-1:] = anchored[:1] + c * np.uint64(k)  # wrap-around owner for slots past the last bin
    lengths = np.empty(bins.size + 1, dtype=np.int64)
    lengths[0] = int(bins[0]) + 1
    lengths[1:-1] = np.diff(bins.astype(np.int64))
    lengths[-1] = k - 1 - int(bins[-1])
    flat = np.repeat(owners, lengths)
    return flat - _offset_constant(k) * np.arange(k, dtype=np.uint64)


def doph(tokens, scheme: HashScheme) -> np.ndarray:
    """One-permutation signature: hash each token once, bin, keep minima, densify."""
    if scheme.mode != "doph":
        raise ValueError(f"parameter error: scheme mode is {scheme.mode!r}, expected 'doph'")
    return _doph_core(tokens, scheme.seed, scheme.num_bins)


def _doph_core(tokens, seed: int, k: int) -> np.ndarray:
    arr = _as_token_array(tokens)
    if arr.size == 0:
        raise ValueError("empty set error: one-permutation hashing needs at least one token")
    h = _token_hashes(arr, derive_seed(seed, _TAG_DOPH))
    bins = h % np.uint64(k)
    order = np.argsort(bins, kind="stable")
    bins_sorted = bins[order]
    h_sorted = h[order]
    first = np.empty(bins_sorted.size, dtype=bool)
    first[0] = True
    first[1:] = bins_sorted[1:] != bins_sorted[:-1]
    starts = np.flatnonzero(first)
    return _densify(bins_sorted[starts], np.minimum.reduceat(h_sorted, starts), k)


def doph_dense_chunks(ids: np.ndarray, offsets: np.ndarray, seed: int, k: int,
                      chunk_rows: int = 4096):
    """Yield (row_start, row_end, dense (R, k) uint64) for a CSR token matrix.

    Batched equivalent of calling _doph_core row by row (bit-identical
    output); rows must be non-empty.
    """
    n = len(offsets) - 1
    counts = np.diff(offsets)
    if n and counts.min() <= 0:
        raise ValueError("empty set error: every row must have at least one token")
    salt = derive_seed(seed, _TAG_DOPH)
    c = _offset_constant(k)
    ku = np.uint64(k)
    slot_idx = None
    for row_start in range(0, n, chunk_rows):
        row_end = min(row_start + chunk_rows, n)
        r = row_end - row_start
        lo, hi = offsets[row_start], offsets[row_end]
        h = _token_hashes(ids[lo:hi], salt)
        bins = h % ku
        local_rows = np.repeat(np.arange(r, dtype=np.uint64), counts[row_start:row_end])
        flat_key = local_rows * ku + bins
        order = np.argsort(flat_key, kind="stable")
        key_s = flat_key[order]
        h_s = h[order]
        first = np.empty(key_s.size, dtype=bool)
        first[0] = True
        first[1:] = key_s[1:] != key_s[:-1]
        starts = np.flatnonzero(first)
        mins = np.minimum.reduceat(h_s, starts)
        ukeys = key_s[starts]
        ubins = (ukeys % ku).astype(np.int64)
        urows = (ukeys // ku).astype(np.int64)
        row_first = np.empty(urows.size, dtype=bool)
        row_first[0] = True
        row_first[1:] = urows[1:] != urows[:-1]
        firsts_idx = np.flatnonzero(row_first)
        ends_idx = np.concatenate([firsts_idx[1:], [urows.size]])
        prev_bins = np.empty_like(ubins)
        prev_bins[1:] = ubins[:-1]
        prev_bins[firsts_idx] = -1
        lengths = ubins - prev_bins
        trailing = (k - 1) - ubins[ends_idx - 1]
        anchored = mins + c * ubins.astype(np.uint64)
        trail_owner = anchored[firsts_idx] + c * ku
        owners_all = np.insert(anchored, ends_idx, trail_owner)
        lengths_all = np.insert(lengths, ends_idx, trailing)
        flat = np.repeat(owners_all, lengths_all)
        if slot_idx is None or slot_idx.size != r * k:
            slot_idx = np.tile(np.arange(k, dtype=np.uint64), r)
        dense = (flat - c * slot_idx).reshape(r, k)
        yield row_start, row_end, dense


# ---------------------------------------------------------------------------
# Weighted hashing: consistent threshold sampling, then the one-permutation core
# ---------------------------------------------------------------------------

def sample_weighted(bag: dict, seed: int, max_component: float | None = None) -> set:
    """Include token i with probability weight_i / norm, consistently across bags.

    The inclusion threshold for a token depends only on (token, seed), so two
    bags sampled under the same seed keep shared tokens together whenever the
    smaller weight admits them; norm defaults to the bag's own max component
    but should be the corpus-wide max so all probabilities are <= 1.
    """
    if not bag:
        return set()
    ids = np.fromiter(bag.keys(), dtype=np.uint64, count=len(bag))
    weights = np.fromiter(bag.values(), dtype=np.float64, count=len(bag))
    if (weights < 0).any():
        raise ValueError("domain error: negative weight in bag")
    norm = float(max_component) if max_component is not None else float(weights.max())
    if norm <= 0.0:
        return set()
    probs = np.minimum(weights / norm, 1.0)
    u = to_unit(_token_hashes(ids, derive_seed(seed, _TAG_SAMPLE)))
    return set(ids[u < probs].tolist())


def sentinel_signature(scheme: HashScheme) -> np.ndarray:
    return np.full(scheme.num_bins, SENTINEL, dtype=np.uint64)


def is_sentinel(signature: np.ndarray) -> bool:
    return bool((signature == SENTINEL).all())


def weighted_doph(bag: dict, scheme: HashScheme, max_component: float | None = None) -> np.ndarray:
    """One-permutation signature of a weighted bag via consistent sampling.

    An all-zero or unluckily-sampled-empty bag yields the reserved sentinel
    signature; build_blocks places such records in singleton buckets.
    """
    if scheme.mode != "weighted-doph":
        raise ValueError(f"parameter error: scheme mode is {scheme.mode!r}, expected 'weighted-doph'")
    sampled = sample_weighted(bag, scheme.seed, max_component)
    if not sampled:
        return sentinel_signature(scheme)
    return _doph_core(sampled, scheme.seed, scheme.num_bins)


def sample_weighted_rows(ids: np.ndarray, offsets: np.ndarray, weights: np.ndarray,
                         seed: int, max_component: float) -> tuple[np.ndarray, np.ndarray]:
    """Batched sample_weighted over a CSR token matrix; empty output rows allowed."""
    if max_component <= 0.0:
        return np.empty(0, dtype=np.uint64), np.zeros(len(offsets), dtype=np.int64)
    u = to_unit(_token_hashes(ids, derive_seed(seed, _TAG_SAMPLE)))
    keep = u < np.minimum(weights / max_component, 1.0)
    empty_in = np.diff(offsets) == 0
    if ids.size:
        # reduceat quirks: bool input stays bool, an empty segment echoes the
        # element at its start index, and a start index == len raises.
        starts = np.minimum(offsets[:-1], ids.size - 1)
        new_counts = np.add.reduceat(keep.astype(np.int64), starts)
        new_counts = np.where(empty_in, 0, new_counts)
    else:
        new_counts = np.zeros(len(offsets) - 1, dtype=np.int64)
    new_offsets = np.concatenate([[0], np.cumsum(new_counts)]).astype(np.int64)
    return ids[keep], new_offsets


# ---------------------------------------------------------------------------
# Exact weighted-to-binary expansion (small-instance test oracle)
# ---------------------------------------------------------------------------

def expand_exact(bag: dict, delta: float, max_size: int = 10 ** 6) -> set:
    """Unary expansion: weight I*delta becomes composite tokens (id,1)..(id,I).

    Plain Jaccard between two expansions equals the weighted Jaccard of the
    source bags exactly.  Guarded against large expansions; weights must be
    integer multiples of delta within 1e-9.
    """
    if delta <= 0:
        raise ValueError(f"parameter error: delta must be positive, got {delta}")
    levels = {}
    total = 0
    for tid, w in bag.items():
        if w < 0:
            raise ValueError(f"domain error: negative weight for token {tid!r}")
        i = round(w / delta)
        if abs(w - i * delta) > 1e-9:
            raise ValueError(f"domain error: weight {w} of token {tid!r} is not a multiple of delta={delta}")
        levels[tid] = i
        total += i
        if total > max_size:
            raise ValueError(f"size guard error: expansion exceeds {max_size} dimensions")
    return {(tid, level) for tid, i in levels.items() for level in range(1, i + 1)}


# ---------------------------------------------------------------------------
# (K, L) banding
# ---------------------------------------------------------------------------

def band_keys(signatures: np.ndarray, K: int, L: int) -> np.ndarray:
    """Digest each band of K consecutive slots into one 64-bit key.

    signatures may be wider than K*L (a slot pool); only the first K*L slots
    are read, so keys for L bands are a prefix of keys for L+1 bands.
    """
    sigs = np.atleast_2d(np.asarray(signatures, dtype=np.uint64))
    if sigs.shape[1] < K * L:
        raise ValueError(f"signature length mismatch: need {K * L} slots, got {sigs.shape[1]}")
    view = sigs[:, :K * L].reshape(sigs.shape[0], L, K)
    acc = np.full((sigs.shape[0], L), _BAND_INIT, dtype=np.uint64)
    for i in range(K):
        acc = splitmix64(acc ^ np.ascontiguousarray(view[:, :, i]))
    return acc


def sentinel_band_keys(rows: np.ndarray, L: int, seed: int) -> np.ndarray:
    """Per-(record, table) unique keys so sentinel records sit in singleton buckets."""
    salt = np.uint64(derive_seed(seed, _TAG_SENTINEL))
    base = rows.astype(np.uint64)[:, None] * np.uint64(L) + np.arange(L, dtype=np.uint64)[None, :]
    return splitmix64(base ^ salt)


@dataclass
class BlockAssignment:
    """Per-table buckets: band key -> record ids.  Blocks overlap across tables."""

    tables: list[dict[int, list[int]]]
    K: int
    L: int
    record_ids: list[int]

    def candidate_pairs(self) -> set[tuple[int, int]]:
        """Union over tables of all within-bucket unordered pairs."""
        pairs = set()
        for table in self.tables:
            for bucket in table.values():
                if len(bucket) < 2:
                    continue
                ordered = sorted(bucket)
                for i in range(len(ordered)):
                    for j in range(i + 1, len(ordered)):
                        pairs.add((ordered[i], ordered[j]))
        return pairs

    def dump(self, path) -> None:
        """Write table_index<TAB>band_key_hex<TAB>record_id lines."""
        with open(path, "w", encoding="utf-8") as fh:
            for t, table in enumerate(self.tables):
                for key in sorted(table):
                    for rid in table[key]:
                        fh.write(f"{t}\t{key:016x}\t{rid}\n")


def blocks_from_keys(keys: np.ndarray, K: int, L: int, record_ids=None) -> BlockAssignment:
    """Group records into per-table buckets from an (n, L) band-key matrix."""
    n = keys.shape[0]
    if record_ids is None:
        record_ids = list(range(n))
    elif len(record_ids) != n:
        raise ValueError(f"parameter error: {len(record_ids)} record ids for {n} key rows")
    tables: list[dict[int, list[int]]] = []
    for t in range(L):
        col = keys[:, t]
        table: dict[int, list[int]] = {}
        for row in range(n):
            table.setdefault(int(col[row]), []).append(record_ids[row])
        tables.append(table)
    return BlockAssignment(tables, K, L, list(record_ids))


def build_blocks(signatures, scheme: HashScheme, record_ids=None) -> BlockAssignment:
    """Group records by band key, one hash table per band.

    Signatures must have exactly K*L slots.  Records carrying the reserved
    sentinel signature get a unique key per table (singleton buckets).
    """
    sigs = np.atleast_2d(np.asarray(signatures, dtype=np.uint64))
    n = sigs.shape[0]
    if sigs.shape[1] != scheme.num_bins:
        raise ValueError(
            f"signature length mismatch: expected {scheme.num_bins}, got {sigs.shape[1]}")
    keys = band_keys(sigs, scheme.K, scheme.L)
    sentinel_rows = np.flatnonzero((sigs == SENTINEL).all(axis=1))
    if sentinel_rows.size:
        keys[sentinel_rows] = sentinel_band_keys(sentinel_rows, scheme.L, scheme.seed)
    return blocks_from_keys(keys, scheme.K, scheme.L, record_ids)
