"""Synthetic casualty-record corpora with planted duplicates and known truth.

Entities are drawn from a name pool; each entity emits 1-4 records (the
first copy clean, later copies noised) according to a duplication
distribution that keeps duplicates sparse.  The returned truth set labels
all within-entity pairs as matches and a seeded sample of cross-entity
pairs (10x the match count) as nonmatches; everything else is unlabeled.
"""
from __future__ import annotations

import datetime
import random
from dataclasses import dataclass, field
from importlib import resources

from .records import Corpus, Record, TruthSet, canonical_pair, normalize_field

GOVERNORATES = (
    "Damascus", "Rif Dimashq", "Aleppo", "Homs", "Hama", "Latakia", "Idlib",
    "Deir ez-Zor", "Raqqa", "Daraa", "Tartus", "Quneitra", "As-Suwayda", "Al-Hasakah",
)

# Substitution alphabet for character noise.
_ARABIC_LETTERS = "ابتثجحخدذرزسشصضطظعغفقكلمنهويءأإآةىئؤ"

DEFAULT_DUPLICATION = {1: 0.97, 2: 0.02, 3: 0.007, 4: 0.003}


@dataclass
class NoiseModel:
    """Per-copy corruption rates; one seed drives the whole generation run."""

    char_sub_rate: float = 0.02
    char_swap_rate: float = 0.15
    char_del_rate: float = 0.01
    date_perturb_days: int = 2
    governorate_error_rate: float = 0.03
    field_drop_rate: float = 0.02
    seed: int = 0

    def __post_init__(self):
        for name in ("char_sub_rate", "char_swap_rate", "char_del_rate",
                     "governorate_error_rate", "field_drop_rate"):
            rate = getattr(self, name)
            if not 0.0 <= rate <= 1.0:
                raise ValueError(f"parameter error: {name}={rate} outside [0, 1]")
        if self.date_perturb_days < 0:
            raise ValueError("parameter error: date_perturb_days must be >= 0")


@dataclass
class GenSpec:
    """Corpus shape: entity count, duplication distribution, and value pools."""

    n_entities: int
    duplication: dict[int, float] = field(default_factory=lambda: dict(DEFAULT_DUPLICATION))
    name_pool: tuple[str, ...] = ()
    governorates: tuple[str, ...] = GOVERNORATES
    date_start: str = "2011-03-15"
    date_end: str = "2015-12-31"

    def __post_init__(self):
        if self.n_entities < 1:
            raise ValueError("parameter error: n_entities must be >= 1")
        if abs(sum(self.duplication.values()) - 1.0) > 1e-9:
            raise ValueError("parameter error: duplication probabilities must sum to 1")
        if any(m not in (1, 2, 3, 4) for m in self.duplication):
            raise ValueError("parameter error: duplication multiplicities must be in 1..4")
        if not self.name_pool:
            object.__setattr__(self, "name_pool", default_name_pool())
        if not self.name_pool:
            raise ValueError("config error: name pool is empty")


def load_name_pool(path) -> tuple[str, ...]:
    """Plain UTF-8 lines, one name (or name part) per line."""
    with open(path, encoding="utf-8") as fh:
        names = tuple(normalize_field(line.strip()) for line in fh if line.strip())
    if not names:
        raise ValueError(f"config error: name pool {path} is empty")
    return names


def default_name_pool() -> tuple[str, ...]:
    text = resources.files("recblock").joinpath("data/names_ar.txt").read_text("utf-8")
    return tuple(normalize_field(line.strip()) for line in text.splitlines() if line.strip())


@dataclass
class GenResult:
    corpus: Corpus
    truth: TruthSet
    entities: list[tuple[int, int]]       # (entity_id, record_id)


def _noisy_name(name: str, noise: NoiseModel, rng: random.Random) -> str:
    chars = []
    for ch in name:
        if ch != " " and rng.random() < noise.char_del_rate:
            continue
        if ch != " " and rng.random() < noise.char_sub_rate:
            chars.append(rng.choice(_ARABIC_LETTERS))
        else:
            chars.append(ch)
    if len(chars) >= 2 and rng.random() < noise.char_swap_rate:
        i = rng.randrange(len(chars) - 1)
        chars[i], chars[i + 1] = chars[i + 1], chars[i]
    return "".join(chars) or name[:1]


def _perturb_date(date_str: str, noise: NoiseModel, rng: random.Random) -> str:
    if not date_str or noise.date_perturb_days == 0:
        return date_str
    delta = rng.randint(-noise.date_perturb_days, noise.date_perturb_days)
    day = datetime.date.fromisoformat(date_str) + datetime.timedelta(days=delta)
    return day.isoformat()


def _noisy_copy(entity: Record, noise: NoiseModel, rng: random.Random,
                governorates, rec_id: int, source: str) -> Record:
    name = _noisy_name(entity.name, noise, rng)
    date = _perturb_date(entity.date_of_death, noise, rng)
    gov = entity.governorate
    if gov and rng.random() < noise.governorate_error_rate:
        gov = rng.choice([g for g in governorates if g != gov])
    sex = entity.sex
    if rng.random() < noise.field_drop_rate:
        date = ""
    if rng.random() < noise.field_drop_rate:
        gov = ""
    if rng.random() < noise.field_drop_rate:
        sex = ""
    return Record(id=rec_id, name=name, date_of_death=date, governorate=gov,
                  sex=sex, source=source)


def generate(spec: GenSpec, noise: NoiseModel) -> GenResult:
    """Single-threaded seeded generation of (corpus, truth, entity log)."""
    rng = random.Random(noise.seed)
    start = datetime.date.fromisoformat(spec.date_start)
    end = datetime.date.fromisoformat(spec.date_end)
    span = (end - start).days
    if span < 0:
        raise ValueError("parameter error: date_end precedes date_start")
    multiplicities = sorted(spec.duplication)
    weights = [spec.duplication[m] for m in multiplicities]

    entity_of_record: list[int] = []
    proto_records: list[Record] = []
    for entity_id in range(spec.n_entities):
        name = " ".join(rng.choice(spec.name_pool) for _ in range(3))
        date = (start + datetime.timedelta(days=rng.randrange(span + 1))).isoformat()
        entity = Record(
            id=-1,
            name=normalize_field(name),
            date_of_death=date,
            governorate=rng.choice(spec.governorates),
            sex=rng.choice("MF"),
        )
        copies = rng.choices(multiplicities, weights=weights)[0]
        for copy_idx in range(copies):
            rec_id = len(proto_records)
            source = f"list_{copy_idx + 1}"
            if copy_idx == 0:
                record = Record(id=rec_id, name=entity.name,
                                date_of_death=entity.date_of_death,
                                governorate=entity.governorate,
                                sex=entity.sex, source=source)
            else:
                record = _noisy_copy(entity, noise, rng, spec.governorates, rec_id, source)
            proto_records.append(record)
            entity_of_record.append(entity_id)

    # shuffle emission order, reassign sequential ids
    n = len(proto_records)
    order = list(range(n))
    rng.shuffle(order)
    records = []
    entities = []
    new_id_of = [0] * n
    for new_id, old_pos in enumerate(order):
        old = proto_records[old_pos]
        new_id_of[old_pos] = new_id
        records.append(Record(new_id, old.name, old.date_of_death,
                              old.governorate, old.sex, old.source))
        entities.append((entity_of_record[old_pos], new_id))
    entities.sort()

    by_entity: dict[int, list[int]] = {}
    for entity_id, rec_id in entities:
        by_entity.setdefault(entity_id, []).append(rec_id)
    matches = set()
    for rec_ids in by_entity.values():
        for i in range(len(rec_ids)):
            for j in range(i + 1, len(rec_ids)):
                matches.add(canonical_pair(rec_ids[i], rec_ids[j]))

    entity_by_new = {rec_id: ent for ent, rec_id in entities}
    target = 10 * len(matches)
    nonmatches: set[tuple[int, int]] = set()
    attempts = 0
    while len(nonmatches) < target and attempts < 100 * target + 1000:
        attempts += 1
        a = rng.randrange(n)
        b = rng.randrange(n)
        if a == b or entity_by_new[a] == entity_by_new[b]:
            continue
        nonmatches.add(canonical_pair(a, b))

    return GenResult(Corpus(records), TruthSet(matches, nonmatches), entities)


def save_entities(entities, path) -> None:
    """Write entity_id,record_id rows (the oracle log for truth re-derivation)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("entity_id,record_id\n")
        for entity_id, record_id in entities:
            fh.write(f"{entity_id},{record_id}\n")
