"""Character-level replacement costs for Arabic strings, and block refinement.

The cost of replacing character a with b blends three similarities, each in
[0, 1]: how alike they sound, how alike they are written, and how close they
sit on a standard Arabic keyboard.  Replacement cost is 1 - similarity on
each channel, combined by a normalized weighted mean.  A Levenshtein-style
dynamic program turns per-character costs into a normalized string cost, and
conjunction blocks are refined by keeping only the cheapest percentile of
within-block pairs.

The bundled similarity tables are editable approximations built from
documented confusable classes; swap in domain-specific tables via
load_cost_tables().
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .records import Corpus, canonical_pair

DEFAULT_PSI = 12.0
DEFAULT_WEIGHTS = (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)


@dataclass
class CostTables:
    """Similarity tables plus the channel weights (omega, lambda, sigma).

    phonetic/letterform map unordered character pairs to similarity in [0,1];
    keyboard maps a character to (x, y) grid coordinates with psi the maximum
    possible distance.  unmapped_count tallies keyboard lookups that fell
    back to similarity 0.
    """

    phonetic: dict[tuple[str, str], float]
    letterform: dict[tuple[str, str], float]
    keyboard: dict[str, tuple[float, float]]
    psi: float = DEFAULT_PSI
    weights: tuple[float, float, float] = DEFAULT_WEIGHTS
    unmapped_count: int = 0
    _frc_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.psi <= 0:
            raise ValueError(f"parameter error: psi must be positive, got {self.psi}")
        if any(w < 0 for w in self.weights):
            raise ValueError(f"parameter error: negative channel weight in {self.weights}")
        for name, table in (("phonetic", self.phonetic), ("letterform", self.letterform)):
            for pair, sim in table.items():
                if not 0.0 <= sim <= 1.0:
                    raise ValueError(f"domain error: {name} similarity {sim} for {pair} outside [0, 1]")
        coords = list(self.keyboard.values())
        for i in range(len(coords)):
            for j in range(i + 1, len(coords)):
                d = math.dist(coords[i], coords[j])
                if d > self.psi + 1e-9:
                    raise ValueError(
                        f"domain error: keyboard distance {d:.4f} exceeds psi={self.psi}")


def _pair_sim(table: dict[tuple[str, str], float], a: str, b: str) -> float:
    if a == b:
        return 1.0
    return table.get((a, b), table.get((b, a), 0.0))


def keyboard_sim(a: str, b: str, tables: CostTables) -> float:
    """1 - dist(a, b)/psi on the keyboard grid; unmapped characters get 0."""
    if a == b:
        return 1.0
    pa = tables.keyboard.get(a)
    pb = tables.keyboard.get(b)
    if pa is None or pb is None:
        tables.unmapped_count += 1
        return 0.0
    return max(0.0, 1.0 - math.dist(pa, pb) / tables.psi)


def frc(a: str, b: str, tables: CostTables) -> float:
    """Per-character replacement cost in [0, 1]; 0 exactly when a == b.

    Cost on each channel is 1 - similarity; channels combine as a weighted
    mean, so scaling all three weights by a constant changes nothing.
    """
    if a == b:
        return 0.0
    cached = tables._frc_cache.get((a, b))
    if cached is not None:
        return cached
    omega, lam, sigma = tables.weights
    denom = omega + lam + sigma
    if denom == 0:
        raise ValueError("parameter error: channel weights must not all be zero")
    cost = ((1.0 - _pair_sim(tables.phonetic, a, b)) * omega
            + (1.0 - _pair_sim(tables.letterform, a, b)) * lam
            + (1.0 - keyboard_sim(a, b, tables)) * sigma) / denom
    tables._frc_cache[(a, b)] = cost
    return cost


def name_cost(s: str, t: str, tables: CostTables) -> float:
    """Edit distance with frc substitution costs and unit indels, normalized.

    Normalization is by max(len(s), len(t)), giving a symmetric cost in
    [0, 1]; two empty strings cost 0.
    """
    if s == t:
        return 0.0
    m, n = len(s), len(t)
    if m == 0 or n == 0:
        return 1.0
    prev = [float(j) for j in range(n + 1)]
    for i in range(1, m + 1):
        cur = [float(i)] + [0.0] * n
        a = s[i - 1]
        for j in range(1, n + 1):
            cur[j] = min(prev[j] + 1.0,
                         cur[j - 1] + 1.0,
                         prev[j - 1] + frc(a, t[j - 1], tables))
        prev = cur
    return prev[n] / max(m, n)


def refine_block(block, corpus: Corpus, tables: CostTables,
                 percentile: float = 10.0) -> set[tuple[int, int]]:
    """Keep the within-block pairs at or below the given cost percentile.

    The threshold is the linearly interpolated percentile of the block's own
    name-cost distribution, so percentile=100 keeps every pair and the output
    is always a subset of the block's unrefined candidate pairs.
    """
    if not 0.0 < percentile <= 100.0:
        raise ValueError(f"parameter error: percentile must be in (0, 100], got {percentile}")
    ids = sorted(block)
    if len(ids) < 2:
        return set()
    pairs = [(ids[i], ids[j]) for i in range(len(ids)) for j in range(i + 1, len(ids))]
    costs = np.array([name_cost(corpus.record_by_id(a).name,
                                corpus.record_by_id(b).name, tables)
                      for a, b in pairs])
    threshold = float(np.percentile(costs, percentile))
    return {pair for pair, cost in zip(pairs, costs) if cost <= threshold}


def refine_partition(partition, corpus: Corpus, tables: CostTables,
                     percentile: float = 10.0) -> set[tuple[int, int]]:
    """refine_block over every block of a conjunction partition, unioned."""
    pairs: set[tuple[int, int]] = set()
    for block in partition:
        pairs |= refine_block(block, corpus, tables, percentile)
    return pairs


@dataclass
class HistogramSummary:
    """Fixed-bin histogram of replacement costs with zero-cost pairs removed."""

    counts: np.ndarray
    edges: np.ndarray
    mean: float | None
    n_included: int
    n_zero: int


def cost_histogram(costs, bins: int = 50) -> HistogramSummary:
    """Histogram costs over [0, 1] in fixed bins, excluding perfect matches."""
    arr = np.asarray(list(costs), dtype=np.float64)
    nonzero = arr[arr > 0.0]
    counts, edges = np.histogram(nonzero, bins=bins, range=(0.0, 1.0))
    mean = float(nonzero.mean()) if nonzero.size else None
    return HistogramSummary(counts, edges, mean, int(nonzero.size), int(arr.size - nonzero.size))


def save_histogram(summary: HistogramSummary, path) -> None:
    """Write bin_low,bin_high,count CSV rows."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_low", "bin_high", "count"])
        for i, count in enumerate(summary.counts):
            writer.writerow([f"{summary.edges[i]:.6f}", f"{summary.edges[i + 1]:.6f}", int(count)])


# ---------------------------------------------------------------------------
# Table files: char_a<TAB>char_b<TAB>similarity and char<TAB>x<TAB>y
# ---------------------------------------------------------------------------

def _read_pair_table(lines) -> dict[tuple[str, str], float]:
    table = {}
    for line_no, line in enumerate(lines, start=1):
        line = line.rstrip("\n")
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ValueError(f"malformed row: similarity table line {line_no}: expected 3 columns")
        a, b, sim = parts[0], parts[1], float(parts[2])
        table[(a, b) if a <= b else (b, a)] = sim
    return table


def _read_keyboard_table(lines) -> dict[str, tuple[float, float]]:
    table = {}
    for line_no, line in enumerate(lines, start=1):
        line = line.rstrip("\n")
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ValueError(f"malformed row: keyboard table line {line_no}: expected 3 columns")
        table[parts[0]] = (float(parts[1]), float(parts[2]))
    return table


def load_cost_tables(phonetic_path, letterform_path, keyboard_path,
                     psi: float = DEFAULT_PSI, weights=DEFAULT_WEIGHTS) -> CostTables:
    """Load the three table files and validate ranges and the psi bound."""
    with open(phonetic_path, encoding="utf-8") as fh:
        phonetic = _read_pair_table(fh)
    with open(letterform_path, encoding="utf-8") as fh:
        letterform = _read_pair_table(fh)
    with open(keyboard_path, encoding="utf-8") as fh:
        keyboard = _read_keyboard_table(fh)
    return CostTables(phonetic, letterform, keyboard, psi=psi, weights=tuple(weights))


def default_tables(weights=DEFAULT_WEIGHTS) -> CostTables:
    """The bundled approximate tables for a standard 101-key Arabic layout."""
    data = resources.files("recblock").joinpath("data")
    phonetic = _read_pair_table(data.joinpath("phonetic_ar.tsv").read_text("utf-8").splitlines())
    letterform = _read_pair_table(data.joinpath("letterform_ar.tsv").read_text("utf-8").splitlines())
    keyboard = _read_keyboard_table(data.joinpath("keyboard_ar.tsv").read_text("utf-8").splitlines())
    return CostTables(phonetic, letterform, keyboard, psi=DEFAULT_PSI, weights=tuple(weights))
