"""Record schema, labeled truth pairs, and deterministic delimited-file ingestion.

A corpus is an ordered list of immutable records; a truth set is a partial
labeling of unordered record-id pairs as matches or nonmatches.  Pairs are
canonicalized (smaller id first) at every boundary so nothing downstream can
double count.
"""
from __future__ import annotations

import csv
import unicodedata
from dataclasses import dataclass, field

# Reserved characters used by the shingling layer: U+241F separates field
# values inside a record string, U+2400 pads strings shorter than the
# shingle length.  Ingestion strips both so field boundaries can never be
# forged by data.
RESERVED_SEPARATOR = "␟"
RESERVED_PAD = "␀"

DELIMITER = ","
CORPUS_COLUMNS = ("id", "name", "date_of_death", "governorate", "sex", "source")
REQUIRED_COLUMNS = ("name", "date_of_death", "governorate", "sex", "source")
TRUTH_COLUMNS = ("id_a", "id_b", "label")


def normalize_field(value: str) -> str:
    """NFC-normalize and drop the reserved separator/pad characters."""
    value = unicodedata.normalize("NFC", value)
    if RESERVED_SEPARATOR in value or RESERVED_PAD in value:
        value = value.replace(RESERVED_SEPARATOR, "").replace(RESERVED_PAD, "")
    return value


def normalize_sex(value: str) -> str:
    """Map a raw sex field to 'M', 'F', or '' (unknown)."""
    v = value.strip().upper()
    if v in ("M", "F"):
        return v
    return ""


@dataclass(frozen=True)
class Record:
    """One death/entity record. sex is 'M', 'F', or '' for unknown."""

    id: int
    name: str = ""
    date_of_death: str = ""
    governorate: str = ""
    sex: str = ""
    source: str = ""


@dataclass
class Corpus:
    """Ordered, immutable-after-construction collection of records."""

    records: list[Record]
    _by_id: dict[int, Record] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._by_id = {r.id: r for r in self.records}
        if len(self._by_id) != len(self.records):
            raise ValueError("corpus error: record ids are not distinct")

    @property
    def n(self) -> int:
        return len(self.records)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def record_by_id(self, record_id: int) -> Record:
        return self._by_id[record_id]

    @property
    def ids(self) -> list[int]:
        return [r.id for r in self.records]


def canonical_pair(a: int, b: int) -> tuple[int, int]:
    """Unordered pair with the smaller id first; (i, i) is rejected."""
    if a == b:
        raise ValueError(f"pair error: self-pair ({a}, {b}) is not allowed")
    return (a, b) if a < b else (b, a)


@dataclass
class TruthSet:
    """Hand-labeled match / nonmatch pairs; everything else is unlabeled."""

    matches: set[tuple[int, int]] = field(default_factory=set)
    nonmatches: set[tuple[int, int]] = field(default_factory=set)

    def __post_init__(self):
        overlap = self.matches & self.nonmatches
        if overlap:
            raise ValueError(f"consistency error: pairs labeled both ways: {sorted(overlap)[:5]}")

    @property
    def n_labeled(self) -> int:
        return len(self.matches) + len(self.nonmatches)


def _row_error(path, line_no: int, message: str) -> ValueError:
    return ValueError(f"malformed row: {path} line {line_no}: {message}")


def load_corpus(path) -> Corpus:
    """Read a UTF-8 comma-delimited record file into a Corpus.

    The header must name at least name/date_of_death/governorate/sex/source;
    an id column is optional (sequential ids are assigned when absent).
    Fields are NFC-normalized; a field containing the column delimiter is
    rejected even if it was quoted, because every downstream dump assumes
    delimiter-free values.
    """
    records = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"schema error: {path}: empty file, header row required") from None
        header = [h.strip() for h in header]
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing:
            raise ValueError(f"schema error: {path}: missing required column(s) {missing}")
        col = {name: header.index(name) for name in header}
        has_id = "id" in col
        seen_ids = set()
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise _row_error(path, line_no, f"expected {len(header)} fields, got {len(row)}")
            values = {}
            for name in REQUIRED_COLUMNS:
                raw = row[col[name]]
                if DELIMITER in raw:
                    raise _row_error(path, line_no, f"field {name!r} contains the column delimiter")
                values[name] = normalize_field(raw)
            if has_id:
                raw_id = row[col["id"]].strip()
                try:
                    rec_id = int(raw_id)
                except ValueError:
                    raise _row_error(path, line_no, f"id {raw_id!r} is not an integer") from None
                if rec_id < 0:
                    raise _row_error(path, line_no, f"id {rec_id} is negative")
            else:
                rec_id = len(records)
            if rec_id in seen_ids:
                raise _row_error(path, line_no, f"duplicate id {rec_id}")
            seen_ids.add(rec_id)
            records.append(Record(
                id=rec_id,
                name=values["name"],
                date_of_death=values["date_of_death"],
                governorate=values["governorate"],
                sex=normalize_sex(values["sex"]),
                source=values["source"],
            ))
    return Corpus(records)


def save_corpus(corpus: Corpus, path) -> None:
    """Write a Corpus in the canonical column order (round-trips exactly)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CORPUS_COLUMNS)
        for r in corpus:
            writer.writerow([r.id, r.name, r.date_of_death, r.governorate, r.sex, r.source])


def load_truth(path, valid_ids=None) -> TruthSet:
    """Read an id_a,id_b,label file; pairs are canonicalized and deduplicated.

    A pair appearing under both labels is a consistency error.  When
    valid_ids is given, any id outside it is a referential error.
    """
    matches, nonmatches = set(), set()
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            return TruthSet()
        missing = [c for c in TRUTH_COLUMNS if c not in header]
        if missing:
            raise ValueError(f"schema error: {path}: missing required column(s) {missing}")
        col = {name: header.index(name) for name in TRUTH_COLUMNS}
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                a = int(row[col["id_a"]])
                b = int(row[col["id_b"]])
            except (ValueError, IndexError):
                raise _row_error(path, line_no, "ids must be integers") from None
            label = row[col["label"]].strip().lower()
            if label not in ("match", "nonmatch"):
                raise _row_error(path, line_no, f"label {label!r} not in {{match, nonmatch}}")
            if valid_ids is not None and (a not in valid_ids or b not in valid_ids):
                raise ValueError(f"referential error: {path} line {line_no}: id not in corpus")
            pair = canonical_pair(a, b)
            (matches if label == "match" else nonmatches).add(pair)
    both = matches & nonmatches
    if both:
        raise ValueError(f"consistency error: {path}: pairs labeled both match and nonmatch: {sorted(both)[:5]}")
    return TruthSet(matches, nonmatches)


def save_truth(truth: TruthSet, path) -> None:
    """Write a TruthSet in canonical order (matches first, then nonmatches)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRUTH_COLUMNS)
        for a, b in sorted(truth.matches):
            writer.writerow([a, b, "match"])
        for a, b in sorted(truth.nonmatches):
            writer.writerow([a, b, "nonmatch"])


def load_pairs(path) -> set[tuple[int, int]]:
    """Read a candidate-pair dump (header id_a,id_b) into a canonical set."""
    pairs = set()
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return pairs
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                pairs.add(canonical_pair(int(row[0]), int(row[1])))
            except (ValueError, IndexError):
                raise _row_error(path, line_no, "expected two integer ids") from None
    return pairs


def save_pairs(pairs, path) -> None:
    """Write candidate pairs as id_a,id_b rows, sorted, canonicalized."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id_a", "id_b"])
        for a, b in sorted(canonical_pair(a, b) for a, b in pairs):
            writer.writerow([a, b])
