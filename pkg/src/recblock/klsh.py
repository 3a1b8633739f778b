"""Blocking by k-means over random projections of IDF-weighted shingle bags.

Unlike the banded hashing schemes, the output is a true partition: every
record belongs to exactly one cluster, and clusters are the blocks, with
mean block size n / c.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .hashing import derive_seed, splitmix64, to_unit, to_unit_open
from .records import Corpus
from .shingling import DEFAULT_FIELDS, TokenMatrix, tokenize_corpus

_TAG_PROJ_A = 0x6C62272E07BB0142
_TAG_PROJ_B = 0x100000001B3E5A17


@dataclass(frozen=True)
class ProjectionMatrix:
    """Lazy seeded Gaussian directions: variate g_j(t) is a pure function of
    (seed, projection j, token t), so no D x p matrix is ever materialized."""

    p: int
    seed: int

    def __post_init__(self):
        if self.p < 1:
            raise ValueError(f"parameter error: p must be >= 1, got {self.p}")

    def normals_for(self, token_ids: np.ndarray) -> np.ndarray:
        """(len(tokens), p) standard normals via Box-Muller on counter hashes."""
        t = token_ids.astype(np.uint64, copy=False)[:, None]
        salt_a = splitmix64(np.uint64(derive_seed(self.seed, _TAG_PROJ_A)) + np.arange(self.p, dtype=np.uint64))
        salt_b = splitmix64(np.uint64(derive_seed(self.seed, _TAG_PROJ_B)) + np.arange(self.p, dtype=np.uint64))
        u1 = to_unit_open(splitmix64(t ^ salt_a[None, :]))
        u2 = to_unit(splitmix64(t ^ salt_b[None, :]))
        return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def project(bag: dict, proj: ProjectionMatrix) -> np.ndarray:
    """Weighted sum of per-token Gaussian directions; empty bag -> origin."""
    if not bag:
        return np.zeros(proj.p)
    ids = np.fromiter(bag.keys(), dtype=np.uint64, count=len(bag))
    weights = np.fromiter(bag.values(), dtype=np.float64, count=len(bag))
    return weights @ proj.normals_for(ids)


def project_rows(tm: TokenMatrix, proj: ProjectionMatrix, chunk_tokens: int = 1 << 20) -> np.ndarray:
    """Project every row of a token matrix; one normals row per unique token."""
    unique_ids, inverse = np.unique(tm.ids, return_inverse=True)
    normals = proj.normals_for(unique_ids)
    out = np.zeros((tm.n, proj.p))
    rows = np.repeat(np.arange(tm.n), np.diff(tm.offsets))
    for lo in range(0, tm.ids.size, chunk_tokens):
        hi = min(lo + chunk_tokens, tm.ids.size)
        np.add.at(out, rows[lo:hi], tm.weights[lo:hi, None] * normals[inverse[lo:hi]])
    return out


@dataclass
class ClusterModel:
    """A c-way partition of records with centroids and the Lloyd objective trace."""

    c: int
    centroids: np.ndarray                    # (c, p)
    assignment: np.ndarray                   # (n,) cluster id per record position
    record_ids: list[int]
    objective_history: list[float] = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.assignment)

    @property
    def mean_block_size(self) -> float:
        return self.n / self.c

    def blocks(self) -> list[list[int]]:
        """Record ids per cluster, in cluster-id order (empty clusters included)."""
        out: list[list[int]] = [[] for _ in range(self.c)]
        for pos, cluster in enumerate(self.assignment):
            out[cluster].append(self.record_ids[pos])
        return out

    def candidate_pairs(self) -> set[tuple[int, int]]:
        pairs = set()
        for block in self.blocks():
            ordered = sorted(block)
            for i in range(len(ordered)):
                for j in range(i + 1, len(ordered)):
                    pairs.add((ordered[i], ordered[j]))
        return pairs

    def dump(self, path) -> None:
        """Write record_id<TAB>cluster_id lines."""
        with open(path, "w", encoding="utf-8") as fh:
            for pos, cluster in enumerate(self.assignment):
                fh.write(f"{self.record_ids[pos]}\t{cluster}\n")


def _pairwise_sq_dists(points: np.ndarray, centroids: np.ndarray, chunk: int = 4096) -> np.ndarray:
    """(n, c) squared Euclidean distances, chunked over points."""
    n = points.shape[0]
    out = np.empty((n, centroids.shape[0]))
    c_sq = (centroids ** 2).sum(axis=1)
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        block = points[lo:hi]
        out[lo:hi] = ((block ** 2).sum(axis=1)[:, None]
                      - 2.0 * (block @ centroids.T) + c_sq[None, :])
    np.maximum(out, 0.0, out=out)
    return out


def _plusplus_init(points: np.ndarray, c: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centroids = np.empty((c, points.shape[1]))
    centroids[0] = points[rng.integers(n)]
    d2 = ((points - centroids[0]) ** 2).sum(axis=1)
    for i in range(1, c):
        total = d2.sum()
        if total <= 0.0:
            centroids[i] = points[rng.integers(n)]
            continue
        centroids[i] = points[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, ((points - centroids[i]) ** 2).sum(axis=1))
    return centroids


def kmeans_block(points: np.ndarray, c: int, seed: int, max_iter: int = 100,
                 record_ids=None) -> ClusterModel:
    """Lloyd iterations from seeded ++-style init until the assignment fixes.

    Determinism rules: nearest-centroid ties break toward the lowest cluster
    id (argmin), centroid sums accumulate in record order, and each empty
    cluster is reseeded from the farthest remaining point.
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if c < 1 or c > n:
        raise ValueError(f"parameter error: need 1 <= c <= n, got c={c}, n={n}")
    if record_ids is None:
        record_ids = list(range(n))
    rng = np.random.default_rng(seed & (1 << 63) - 1)
    centroids = _plusplus_init(points, c, rng)
    assignment = np.full(n, -1, dtype=np.int64)
    history: list[float] = []
    for _ in range(max_iter):
        d2 = _pairwise_sq_dists(points, centroids)
        new_assignment = d2.argmin(axis=1)
        min_d2 = d2[np.arange(n), new_assignment]
        history.append(float(min_d2.sum()))
        if np.array_equal(new_assignment, assignment):
            break
        assignment = new_assignment
        sums = np.zeros_like(centroids)
        np.add.at(sums, assignment, points)
        counts = np.bincount(assignment, minlength=c)
        nonempty = counts > 0
        centroids[nonempty] = sums[nonempty] / counts[nonempty, None]
        empty = np.flatnonzero(~nonempty)
        if empty.size:
            farthest = np.argsort(-min_d2, kind="stable")
            for slot, cluster in enumerate(empty):
                centroids[cluster] = points[farthest[slot]]
    return ClusterModel(c, centroids, assignment, list(record_ids), history)


def klsh_assign(corpus: Corpus, shingle_k: int, p: int, c: int, seed: int,
                fields=DEFAULT_FIELDS, max_iter: int = 100) -> ClusterModel:
    """Full pipeline: shingle -> IDF weights -> random projection -> k-means."""
    tm = tokenize_corpus(corpus, shingle_k, fields, idf=True)
    points = project_rows(tm, ProjectionMatrix(p, seed))
    return kmeans_block(points, c, seed, max_iter=max_iter, record_ids=corpus.ids)
