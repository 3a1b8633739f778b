"""Conjunction and disjunction-of-conjunctions blocking over record fields.

A conjunction co-blocks records that agree exactly on every key; a
disjunction unions the candidate pairs of several conjunctions.  Records
missing a value for any key of a rule are never co-blocked by that rule
(they form singleton blocks), so absence of data cannot create agreement.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

from .records import Corpus, Record, canonical_pair

BASE_KEYS = ("name", "date_of_death", "governorate", "sex")
DERIVED_KEYS = ("year", "month", "day")
ALL_KEYS = BASE_KEYS + DERIVED_KEYS

_SCHEME_GUARD = 10 ** 5


def field_value(record: Record, key: str) -> str | None:
    """Value of a base or derived key; None (missing) when it cannot be read.

    year/month/day come from a YYYY-MM-DD date_of_death; an empty or
    unparseable date yields None for all three.
    """
    if key in BASE_KEYS:
        value = getattr(record, key)
        return value if value else None
    if key not in DERIVED_KEYS:
        raise ValueError(f"parameter error: unknown field key {key!r}")
    parts = record.date_of_death.split("-")
    if len(parts) != 3 or not all(p.isdigit() for p in parts):
        return None
    return {"year": parts[0], "month": parts[1], "day": parts[2]}[key]


@dataclass(frozen=True)
class ConjunctionRule:
    """Agreement on every key; keys stored in a canonical order."""

    keys: tuple[str, ...]

    def __post_init__(self):
        if not self.keys:
            raise ValueError("parameter error: a conjunction needs at least one key")
        unknown = [k for k in self.keys if k not in ALL_KEYS]
        if unknown:
            raise ValueError(f"parameter error: unknown field key(s) {unknown}")
        object.__setattr__(self, "keys", tuple(sorted(set(self.keys), key=ALL_KEYS.index)))

    def text(self) -> str:
        return "+".join(self.keys)


@dataclass(frozen=True)
class DisjunctionScheme:
    """Union of conjunction rules."""

    rules: tuple[ConjunctionRule, ...]

    def __post_init__(self):
        if not self.rules:
            raise ValueError("parameter error: a scheme needs at least one rule")

    def text(self) -> str:
        return " | ".join(rule.text() for rule in self.rules)


def parse_scheme(text: str) -> DisjunctionScheme:
    """Parse 'year+governorate | month+year+governorate' style scheme text."""
    rules = []
    for part in text.split("|"):
        keys = tuple(k.strip() for k in part.split("+") if k.strip())
        if not keys:
            raise ValueError(f"parameter error: empty conjunction in scheme {text!r}")
        rules.append(ConjunctionRule(keys))
    return DisjunctionScheme(tuple(rules))


def parse_scheme_file(path) -> list[DisjunctionScheme]:
    """One scheme per non-empty, non-comment line."""
    schemes = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                schemes.append(parse_scheme(line))
    return schemes


def apply_conjunction(corpus: Corpus, rule: ConjunctionRule) -> list[list[int]]:
    """Partition record ids by their key-value tuple.

    Records with a missing value under any key become singleton blocks.
    Blocks come out in first-encounter order; the block lists preserve
    corpus order.
    """
    groups: dict[tuple, list[int]] = {}
    singletons: list[list[int]] = []
    for record in corpus:
        values = tuple(field_value(record, key) for key in rule.keys)
        if any(v is None for v in values):
            singletons.append([record.id])
        else:
            groups.setdefault(values, []).append(record.id)
    return list(groups.values()) + singletons


def candidate_pairs(partition) -> set[tuple[int, int]]:
    """All within-block unordered pairs, over any iterable of blocks."""
    pairs = set()
    for block in partition:
        ordered = sorted(block)
        for i in range(len(ordered)):
            for j in range(i + 1, len(ordered)):
                pairs.add((ordered[i], ordered[j]))
    return pairs


def pair_count(partition) -> int:
    """sum over blocks of size*(size-1)/2 without materializing the pairs."""
    return sum(len(b) * (len(b) - 1) // 2 for b in partition)


def apply_disjunction(corpus: Corpus, scheme: DisjunctionScheme) -> set[tuple[int, int]]:
    """Deduplicated union of candidate pairs over the scheme's rules."""
    pairs: set[tuple[int, int]] = set()
    for rule in scheme.rules:
        pairs |= candidate_pairs(apply_conjunction(corpus, rule))
    return pairs


def enumerate_schemes(keys, max_rule_size: int) -> list[DisjunctionScheme]:
    """All conjunctions up to max_rule_size, plus all two-rule disjunctions.

    Deterministic order: conjunctions by (size, key order), then disjunction
    pairs by conjunction index.  Guarded against combinatorial blowups.
    """
    keys = tuple(keys)
    if max_rule_size > len(keys):
        raise ValueError(
            f"parameter error: max_rule_size {max_rule_size} exceeds {len(keys)} keys")
    m = len(keys)
    n_conj = 0
    binom = 1
    for size in range(1, max_rule_size + 1):
        binom = binom * (m - size + 1) // size
        n_conj += binom
    total = n_conj + n_conj * (n_conj - 1) // 2
    if total > _SCHEME_GUARD:
        raise ValueError(
            f"combinatorial guard: {total} schemes exceeds the {_SCHEME_GUARD} limit")
    conjunctions = [ConjunctionRule(combo)
                    for size in range(1, max_rule_size + 1)
                    for combo in combinations(keys, size)]
    schemes = [DisjunctionScheme((rule,)) for rule in conjunctions]
    schemes += [DisjunctionScheme((a, b)) for a, b in combinations(conjunctions, 2)]
    return schemes
