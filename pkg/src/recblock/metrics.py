"""Blocking-quality evaluation against a partial ground-truth labeling.

Only labeled pairs enter the four confusion cells: an unlabeled candidate
pair is neither a false positive nor a true negative, it is simply unknown.
The reduction ratio likewise compares labeled candidate pairs against all
labeled pairs.  Candidate volume (all pairs, labeled or not) is reported
separately as candidate_count.

The sweep harness evaluates a (K, L) grid efficiently by computing, per
(shingle, K, seed), one slot pool of K * max(L) one-permutation hashes and
reading each L cell off a prefix of its bands.  Collision behavior per slot
is identical to computing each cell independently, and it makes recall
exactly monotone in L for fixed K and signatures.
"""
from __future__ import annotations

import csv
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import klsh as klsh_mod
from . import lsh, rules as rules_mod
from .records import Corpus, TruthSet
from .shingling import DEFAULT_FIELDS, tokenize_corpus

RESULTS_HEADER = ("method", "shingle", "K", "L", "seed",
                  "recall", "precision", "rr", "candidates", "millis")

HASH_METHODS = ("classical", "doph", "weighted-doph")


@dataclass
class BlockingMetrics:
    """Confusion counts over labeled pairs plus the derived rates."""

    tp: int
    fp: int
    fn: int
    tn: int
    recall: float
    precision: float
    rr: float | None
    candidate_count: int
    total_pairs: int


def _rates(tp: int, fp: int, fn: int) -> tuple[float, float]:
    recall = tp / (tp + fn) if (tp + fn) > 0 else 1.0
    precision = tp / (tp + fp) if (tp + fp) > 0 else 1.0
    return recall, precision


def confusion(candidates: set, truth: TruthSet) -> BlockingMetrics:
    """Classify labeled pairs by candidate membership; unlabeled pairs are skipped."""
    tp = len(candidates & truth.matches)
    fp = len(candidates & truth.nonmatches)
    fn = len(truth.matches) - tp
    tn = len(truth.nonmatches) - fp
    recall, precision = _rates(tp, fp, fn)
    return BlockingMetrics(tp, fp, fn, tn, recall, precision, None, len(candidates), 0)


def reduction_ratio(candidates: set, truth: TruthSet, n: int | None = None) -> float | None:
    """1 - (labeled candidate pairs / all labeled pairs); None when nothing is labeled."""
    labeled_total = truth.n_labeled
    if labeled_total == 0:
        return None
    hit = len(candidates & truth.matches) + len(candidates & truth.nonmatches)
    return 1.0 - hit / labeled_total
    # n is unused by the labeled-pair formula but kept for interface symmetry


def evaluate(candidates: set, truth: TruthSet, n: int) -> BlockingMetrics:
    """Full metrics for a candidate-pair set against the truth labeling."""
    m = confusion(candidates, truth)
    m.rr = reduction_ratio(candidates, truth, n)
    m.total_pairs = n * (n - 1) // 2
    return m


@dataclass
class SweepGrid:
    """Axes of a parameter sweep, enumerated in deterministic order.

    method selects the interpretation of the axes:
      classical / doph / weighted-doph: Ks x Ls are band sizes and table counts;
      klsh: Ks carries the projection count p, Ls the cluster count c;
      rules: schemes (text form) are evaluated, the numeric axes are ignored.
    """

    method: str
    shingles: tuple[int, ...] = (3,)
    Ks: tuple[int, ...] = (15,)
    Ls: tuple[int, ...] = (100,)
    seeds: tuple[int, ...] = (0,)
    fields: tuple[str, ...] = DEFAULT_FIELDS
    schemes: tuple[str, ...] = ()
    idf: bool = True
    max_pair_occurrences: int = 20_000_000

    def __post_init__(self):
        if self.method not in HASH_METHODS + ("klsh", "rules"):
            raise ValueError(f"parameter error: unknown sweep method {self.method!r}")
        for name in ("shingles", "Ks", "Ls", "seeds"):
            if not tuple(getattr(self, name)):
                raise ValueError(f"parameter error: sweep axis {name} is empty")
        if self.method == "rules" and not tuple(self.schemes):
            raise ValueError("parameter error: rules sweep needs at least one scheme")


# ---------------------------------------------------------------------------
# Vectorized helpers shared by the sweep paths
# ---------------------------------------------------------------------------

def _positions(corpus: Corpus) -> dict[int, int]:
    return {rid: pos for pos, rid in enumerate(corpus.ids)}

def _labeled_positions(corpus: Corpus, truth: TruthSet):
    """(P, 2) position array and (P,) match mask for all labeled pairs."""
    pos = _positions(corpus)
    pairs = []
    is_match = []
    for a, b in sorted(truth.matches):
        pairs.append((pos[a], pos[b]))
        is_match.append(True)
    for a, b in sorted(truth.nonmatches):
        pairs.append((pos[a], pos[b]))
        is_match.append(False)
    if not pairs:
        return np.empty((0, 2), dtype=np.int64), np.empty(0, dtype=bool)
    return np.asarray(pairs, dtype=np.int64), np.asarray(is_match, dtype=bool)


def _first_collision_table(keys: np.ndarray, pair_pos: np.ndarray) -> np.ndarray:
    """For each labeled pair, the first table index where band keys agree (L if none)."""
    n_tables = keys.shape[1]
    if pair_pos.size == 0:
        return np.empty(0, dtype=np.int64)
    eq = keys[pair_pos[:, 0]] == keys[pair_pos[:, 1]]
    any_hit = eq.any(axis=1)
    first = eq.argmax(axis=1)
    return np.where(any_hit, first, n_tables)


def _grouped_pairs_packed(labels: np.ndarray) -> tuple[np.ndarray, int]:
    """All within-group unordered pairs of positions, packed into uint64.

    labels assigns each position a group; returns (packed pairs, occurrence
    count).  Positions must fit in 32 bits.
    """
    n = labels.size
    order = np.argsort(labels, kind="stable")
    sorted_labels = labels[order]
    first = np.empty(n, dtype=bool)
    if n == 0:
        return np.empty(0, dtype=np.uint64), 0
    first[0] = True
    first[1:] = sorted_labels[1:] != sorted_labels[:-1]
    starts = np.flatnonzero(first)
    sizes = np.diff(np.append(starts, n))
    occ = int((sizes * (sizes - 1) // 2).sum())
    if occ == 0:
        return np.empty(0, dtype=np.uint64), 0
    # element at sorted position i pairs with the q earlier members of its group
    q = np.arange(n, dtype=np.int64) - np.repeat(starts, sizes)
    second = np.repeat(order, q)
    range_starts = np.repeat(np.repeat(starts, sizes), q)
    cum = np.concatenate([[0], np.cumsum(q)[:-1]])
    ragged = np.arange(occ, dtype=np.int64) - np.repeat(cum, q)
    first_elem = order[range_starts + ragged]
    lo = np.minimum(first_elem, second).astype(np.uint64)
    hi = np.maximum(first_elem, second).astype(np.uint64)
    return (lo << np.uint64(32)) | hi, occ


def _distinct_counts_by_table(keys: np.ndarray, max_tables: int, cap: int) -> list[int | None]:
    """Distinct candidate pairs after tables 0..t, with an occurrence budget.

    Returns one entry per table count 1..max_tables; entries become None once
    the cumulative within-bucket pair occurrences exceed cap.
    """
    counts: list[int | None] = []
    seen = np.empty(0, dtype=np.uint64)
    processed = 0
    dead = False
    for t in range(max_tables):
        if dead:
            counts.append(None)
            continue
        packed, occ = _grouped_pairs_packed(keys[:, t])
        processed += occ
        if processed > cap:
            dead = True
            counts.append(None)
            continue
        if packed.size:
            seen = np.union1d(seen, packed)
        counts.append(int(seen.size))
    return counts


# ---------------------------------------------------------------------------
# Sweep
# ---------------------------------------------------------------------------

def _hash_group_keys(corpus: Corpus, grid: SweepGrid, shingle_k: int, K: int,
                     seed: int, token_cache: dict) -> np.ndarray:
    """(n, max(Ls)) band keys from one pooled signature computation."""
    max_l = max(grid.Ls)
    pool_bins = K * max_l
    weighted = grid.method == "weighted-doph"
    cache_key = (shingle_k, weighted and grid.idf)
    tm = token_cache.get(cache_key)
    if tm is None:
        tm = tokenize_corpus(corpus, shingle_k, grid.fields, idf=weighted and grid.idf)
        token_cache[cache_key] = tm
    n = tm.n
    keys = np.empty((n, max_l), dtype=np.uint64)
    if grid.method == "classical":
        scheme = lsh.HashScheme(K, max_l, seed, "classical-minhash")
        for i in range(n):
            sig = lsh.minhash_classical(tm.row(i), scheme)
            keys[i] = lsh.band_keys(sig, K, max_l)[0]
        return keys
    if weighted:
        max_component = float(tm.weights.max()) if tm.weights.size else 0.0
        ids, offsets = lsh.sample_weighted_rows(tm.ids, tm.offsets, tm.weights,
                                                seed, max_component)
    else:
        ids, offsets = tm.ids, tm.offsets
    row_counts = np.diff(offsets)
    nonempty = np.flatnonzero(row_counts > 0)
    empty = np.flatnonzero(row_counts == 0)
    if nonempty.size:
        sub_offsets = np.concatenate([[0], np.cumsum(row_counts[nonempty])]).astype(np.int64)
        keep = np.repeat(row_counts > 0, row_counts)
        sub_ids = ids[keep]
        out_rows = nonempty
        for lo, hi, dense in lsh.doph_dense_chunks(sub_ids, sub_offsets, seed, pool_bins):
            keys[out_rows[lo:hi]] = lsh.band_keys(dense, K, max_l)
    if empty.size:
        keys[empty] = lsh.sentinel_band_keys(empty, max_l, seed)
    return keys


def _rows_for_hash_group(corpus, truth, grid, shingle_k, K, seed, token_cache):
    t0 = time.perf_counter()
    keys = _hash_group_keys(corpus, grid, shingle_k, K, seed, token_cache)
    pair_pos, is_match = _labeled_positions(corpus, truth)
    first = _first_collision_table(keys, pair_pos)
    max_l = max(grid.Ls)
    match_hist = np.bincount(first[is_match], minlength=max_l + 1)
    nonmatch_hist = np.bincount(first[~is_match], minlength=max_l + 1)
    tp_by_l = np.cumsum(match_hist)[:max_l]
    fp_by_l = np.cumsum(nonmatch_hist)[:max_l]
    sig_millis = (time.perf_counter() - t0) * 1000.0
    t1 = time.perf_counter()
    counts = _distinct_counts_by_table(keys, max_l, grid.max_pair_occurrences)
    count_millis = (time.perf_counter() - t1) * 1000.0
    n_match, n_non = len(truth.matches), len(truth.nonmatches)
    rows = []
    for idx, L in enumerate(grid.Ls):
        tp = int(tp_by_l[L - 1])
        fp = int(fp_by_l[L - 1])
        recall, precision = _rates(tp, fp, n_match - tp)
        labeled = n_match + n_non
        rr = 1.0 - (tp + fp) / labeled if labeled else None
        millis = sig_millis + count_millis if idx == 0 else 0.0
        rows.append(_row(grid.method, shingle_k, K, L, seed, recall, precision,
                         rr, counts[L - 1], millis))
    return rows


def _rows_for_klsh(corpus, truth, grid, shingle_k, p, c, seed):
    t0 = time.perf_counter()
    model = klsh_mod.klsh_assign(corpus, shingle_k, p, c, seed, fields=grid.fields)
    assignment = model.assignment
    pair_pos, is_match = _labeled_positions(corpus, truth)
    hit = assignment[pair_pos[:, 0]] == assignment[pair_pos[:, 1]] if pair_pos.size \
        else np.empty(0, dtype=bool)
    tp = int(np.count_nonzero(hit & is_match))
    fp = int(np.count_nonzero(hit & ~is_match))
    recall, precision = _rates(tp, fp, len(truth.matches) - tp)
    labeled = truth.n_labeled
    rr = 1.0 - (tp + fp) / labeled if labeled else None
    sizes = np.bincount(assignment, minlength=c).astype(np.int64)
    candidates = int((sizes * (sizes - 1) // 2).sum())
    millis = (time.perf_counter() - t0) * 1000.0
    return [_row("klsh", shingle_k, p, c, seed, recall, precision, rr, candidates, millis)]


def _rows_for_rules(corpus, truth, grid, scheme_text, seed):
    t0 = time.perf_counter()
    scheme = rules_mod.parse_scheme(scheme_text)
    n = len(corpus)
    pair_pos, is_match = _labeled_positions(corpus, truth)
    hit = np.zeros(pair_pos.shape[0], dtype=bool)
    label_arrays = []
    for rule in scheme.rules:
        labels = np.empty(n, dtype=np.int64)
        groups: dict[tuple, int] = {}
        next_id = 0
        for posn, record in enumerate(corpus):
            values = tuple(rules_mod.field_value(record, key) for key in rule.keys)
            if any(v is None for v in values):
                labels[posn] = next_id     # singleton: a group no other record joins
                next_id += 1
            else:
                gid = groups.get(values)
                if gid is None:
                    gid = next_id
                    groups[values] = gid
                    next_id += 1
                labels[posn] = gid
        label_arrays.append(labels)
        if pair_pos.size:
            hit |= labels[pair_pos[:, 0]] == labels[pair_pos[:, 1]]
    tp = int(np.count_nonzero(hit & is_match))
    fp = int(np.count_nonzero(hit & ~is_match))
    recall, precision = _rates(tp, fp, len(truth.matches) - tp)
    labeled = truth.n_labeled
    rr = 1.0 - (tp + fp) / labeled if labeled else None
    if len(label_arrays) == 1:
        sizes = np.bincount(label_arrays[0])
        candidates: int | None = int((sizes.astype(np.int64) * (sizes - 1) // 2).sum())
    else:
        stacked = np.column_stack(label_arrays)
        counts = _distinct_counts_by_table(stacked, stacked.shape[1],
                                           grid.max_pair_occurrences)
        candidates = counts[-1]
    millis = (time.perf_counter() - t0) * 1000.0
    return [_row(f"rules:{scheme.text()}", "", "", "", seed, recall, precision,
                 rr, candidates, millis)]


def _row(method, shingle, K, L, seed, recall, precision, rr, candidates, millis) -> dict:
    return {
        "method": str(method),
        "shingle": str(shingle),
        "K": str(K),
        "L": str(L),
        "seed": str(seed),
        "recall": f"{recall:.12g}",
        "precision": f"{precision:.12g}",
        "rr": "" if rr is None else f"{rr:.12g}",
        "candidates": "" if candidates is None else str(candidates),
        "millis": str(int(round(millis))),
    }


def _error_row(method, shingle, K, L, seed) -> dict:
    return {"method": str(method), "shingle": str(shingle), "K": str(K),
            "L": str(L), "seed": str(seed), "recall": "", "precision": "",
            "rr": "", "candidates": "", "millis": ""}


def _existing_row_keys(out_path) -> set[tuple]:
    keys = set()
    if out_path and os.path.exists(out_path) and os.path.getsize(out_path):
        with open(out_path, encoding="utf-8", newline="") as fh:
            for row in csv.DictReader(fh):
                keys.add((row.get("method"), row.get("shingle"), row.get("K"),
                          row.get("L"), row.get("seed")))
    return keys


def sweep(corpus: Corpus, truth: TruthSet, grid: SweepGrid,
          out_path=None, workers: int = 1) -> list[dict]:
    """Evaluate every grid cell; emit rows in deterministic grid order.

    Rows are appended to out_path as they complete (header written once);
    cells already present in an existing file are skipped, so an interrupted
    sweep can resume.  A failing cell yields a row with empty metric fields
    and the sweep continues.  millis charges shared signature work to the
    first L row of its (shingle, K, seed) group.
    """
    groups: list[tuple] = []
    if grid.method in HASH_METHODS:
        for shingle_k in grid.shingles:
            for K in grid.Ks:
                for seed in grid.seeds:
                    groups.append(("hash", shingle_k, K, seed))
    elif grid.method == "klsh":
        for shingle_k in grid.shingles:
            for p in grid.Ks:
                for c in grid.Ls:
                    for seed in grid.seeds:
                        groups.append(("klsh", shingle_k, p, c, seed))
    else:
        for scheme_text in grid.schemes:
            for seed in grid.seeds:
                groups.append(("rules", scheme_text, seed))

    existing = _existing_row_keys(out_path)
    token_cache: dict = {}

    def run_group(group) -> list[dict]:
        try:
            if group[0] == "hash":
                _, shingle_k, K, seed = group
                return _rows_for_hash_group(corpus, truth, grid, shingle_k, K, seed, token_cache)
            if group[0] == "klsh":
                _, shingle_k, p, c, seed = group
                return _rows_for_klsh(corpus, truth, grid, shingle_k, p, c, seed)
            _, scheme_text, seed = group
            return _rows_for_rules(corpus, truth, grid, scheme_text, seed)
        except Exception:
            if group[0] == "hash":
                _, shingle_k, K, seed = group
                return [_error_row(grid.method, shingle_k, K, L, seed) for L in grid.Ls]
            if group[0] == "klsh":
                _, shingle_k, p, c, seed = group
                return [_error_row("klsh", shingle_k, p, c, seed)]
            _, scheme_text, seed = group
            return [_error_row(f"rules:{scheme_text}", "", "", "", seed)]

    def row_key(row) -> tuple:
        return (row["method"], row["shingle"], row["K"], row["L"], row["seed"])

    out_rows: list[dict] = []
    writer = None
    fh = None
    if out_path:
        new_file = not (os.path.exists(out_path) and os.path.getsize(out_path))
        fh = open(out_path, "a", encoding="utf-8", newline="")
        writer = csv.DictWriter(fh, fieldnames=RESULTS_HEADER)
        if new_file:
            writer.writeheader()
            fh.flush()

    def emit(rows: list[dict]) -> None:
        for row in rows:
            if row_key(row) in existing:
                continue
            out_rows.append(row)
            if writer is not None:
                writer.writerow(row)
                fh.flush()

    try:
        if workers <= 1:
            for group in groups:
                emit(run_group(group))
        else:
            from concurrent.futures import ThreadPoolExecutor
            with ThreadPoolExecutor(max_workers=workers) as pool:
                futures = [pool.submit(run_group, g) for g in groups]
                for future in futures:
                    emit(future.result())
    finally:
        if fh is not None:
            fh.close()
    return out_rows
