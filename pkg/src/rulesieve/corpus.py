"""Paper records, dataset loading and stratified cross-validation folds.

The on-disk format is a UTF-8 CSV with a mandatory header row:

    id,title,abstract,year,n_cites,n_authors,paper_type,doi,label

Empty cells in year/n_cites/n_authors/paper_type/doi mean the value is
absent. The label column accepts 0/1/true/false/yes/no, case-insensitively.
"""

from __future__ import annotations

import csv
import os
import random
from dataclasses import dataclass
from typing import Iterable, Sequence

PAPER_TYPES = ("journal", "conference", "other")

CSV_COLUMNS = (
    "id", "title", "abstract", "year", "n_cites", "n_authors",
    "paper_type", "doi", "label",
)

_TRUE = {"1", "true", "yes"}
_FALSE = {"0", "false", "no"}

# Grammar-facing field names for the record attributes rules can test.
BIBLIO_FIELDS = ("year", "nCites", "nAuthors", "paperType")
TEXT_FIELDS = ("title", "abstract")
ALL_FIELDS = BIBLIO_FIELDS + TEXT_FIELDS

_FIELD_ATTR = {
    "year": "year",
    "nCites": "n_cites",
    "nAuthors": "n_authors",
    "paperType": "paper_type",
    "title": "title",
    "abstract": "abstract",
}


class LoadError(Exception):
    """Raised when a dataset file cannot be parsed."""


@dataclass(frozen=True)
class PaperRecord:
    """One candidate paper from a literature search."""

    id: str
    title: str
    abstract: str
    label: bool
    year: int | None = None
    n_cites: int | None = None
    n_authors: int | None = None
    paper_type: str | None = None
    doi: str | None = None

    def __post_init__(self) -> None:
        if self.title is None or self.abstract is None:
            raise ValueError("title and abstract must be non-null")
        if self.n_cites is not None and self.n_cites < 0:
            raise ValueError(f"n_cites must be >= 0, got {self.n_cites}")
        if self.n_authors is not None and self.n_authors < 1:
            raise ValueError(f"n_authors must be >= 1, got {self.n_authors}")
        if self.paper_type is not None and self.paper_type not in PAPER_TYPES:
            raise ValueError(f"unknown paper_type {self.paper_type!r}")

    def get_field(self, name: str):
        """Value of a grammar-facing field, or None when absent."""
        if name == "titleAbstract":
            return self.title + " " + self.abstract
        return getattr(self, _FIELD_ATTR[name])


@dataclass
class Dataset:
    """Immutable, ordered collection of paper records with unique ids."""

    records: tuple[PaperRecord, ...]
    name: str = ""

    def __post_init__(self) -> None:
        self.records = tuple(self.records)
        by_id: dict[str, PaperRecord] = {}
        for r in self.records:
            if r.id in by_id:
                raise LoadError(f"duplicate record id {r.id!r}")
            by_id[r.id] = r
        self._by_id = by_id
        self._eval_cache: dict = {}

    def __getstate__(self):
        # derived caches are rebuilt on unpickle
        return (self.records, self.name)

    def __setstate__(self, state):
        self.records, self.name = state
        self.__post_init__()

    @property
    def has_biblio(self) -> bool:
        return all(
            r.year is not None
            and r.n_cites is not None
            and r.n_authors is not None
            and r.paper_type is not None
            for r in self.records
        )

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def record(self, record_id: str) -> PaperRecord:
        return self._by_id[record_id]

    def subset(self, ids: Iterable[str], name: str = "") -> "Dataset":
        """New dataset with the records whose id is in ``ids``, order kept."""
        wanted = set(ids)
        return Dataset(
            records=tuple(r for r in self.records if r.id in wanted),
            name=name or self.name,
        )

    def with_records(self, records: Sequence[PaperRecord]) -> "Dataset":
        return Dataset(records=tuple(records), name=self.name)


def available_fields(dataset: Dataset) -> frozenset[str]:
    """Fields rules may test: those present on every record.

    title and abstract are always available; a bibliometric field counts as
    available only when no record lacks it, matching the strict reading of
    has_biblio.
    """
    fields = set(TEXT_FIELDS)
    for name in BIBLIO_FIELDS:
        if all(r.get_field(name) is not None for r in dataset.records):
            fields.add(name)
    return frozenset(fields)


def _parse_optional_int(cell: str, column: str, row_num: int, minimum: int) -> int | None:
    cell = cell.strip()
    if cell == "":
        return None
    try:
        value = int(cell)
    except ValueError:
        raise LoadError(f"row {row_num}: column {column!r} is not an integer: {cell!r}")
    if value < minimum:
        raise LoadError(f"row {row_num}: column {column!r} must be >= {minimum}, got {value}")
    return value


def _parse_label(cell: str, row_num: int) -> bool:
    norm = cell.strip().lower()
    if norm in _TRUE:
        return True
    if norm in _FALSE:
        return False
    raise LoadError(f"row {row_num}: unparsable label {cell!r}")


def _parse_paper_type(cell: str, row_num: int) -> str | None:
    norm = cell.strip().lower()
    if norm == "":
        return None
    if norm not in PAPER_TYPES:
        raise LoadError(f"row {row_num}: unknown paper_type {cell!r}")
    return norm


def load_dataset(path, fmt: str = "csv", name: str = "") -> Dataset:
    """Load a dataset file. Only the CSV format is supported."""
    if fmt != "csv":
        raise ValueError(f"unsupported format {fmt!r}")
    records: list[PaperRecord] = []
    seen_ids: set[str] = set()
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise LoadError("empty file: missing header row")
        if tuple(h.strip() for h in header) != CSV_COLUMNS:
            raise LoadError(
                f"bad header: expected {','.join(CSV_COLUMNS)}, got {','.join(header)}"
            )
        for row_num, row in enumerate(reader, start=2):
            if len(row) != len(CSV_COLUMNS):
                raise LoadError(
                    f"row {row_num}: expected {len(CSV_COLUMNS)} columns, got {len(row)}"
                )
            rid, title, abstract, year, cites, authors, ptype, doi, label = row
            if rid in seen_ids:
                raise LoadError(f"row {row_num}: duplicate id {rid!r}")
            seen_ids.add(rid)
            try:
                records.append(
                    PaperRecord(
                        id=rid,
                        title=title,
                        abstract=abstract,
                        year=_parse_optional_int(year, "year", row_num, minimum=0),
                        n_cites=_parse_optional_int(cites, "n_cites", row_num, minimum=0),
                        n_authors=_parse_optional_int(authors, "n_authors", row_num, minimum=1),
                        paper_type=_parse_paper_type(ptype, row_num),
                        doi=doi.strip() or None,
                        label=_parse_label(label, row_num),
                    )
                )
            except ValueError as exc:
                raise LoadError(f"row {row_num}: {exc}")
    return Dataset(records=tuple(records), name=name or os.path.basename(str(path)))


def save_dataset(dataset: Dataset, path) -> None:
    """Write a dataset back to CSV; load_dataset round-trips all fields."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in dataset.records:
            writer.writerow(
                [
                    r.id,
                    r.title,
                    r.abstract,
                    "" if r.year is None else r.year,
                    "" if r.n_cites is None else r.n_cites,
                    "" if r.n_authors is None else r.n_authors,
                    "" if r.paper_type is None else r.paper_type,
                    "" if r.doi is None else r.doi,
                    int(r.label),
                ]
            )


def class_counts(dataset: Dataset) -> tuple[int, int]:
    """(positives, negatives) of a dataset."""
    pos = sum(1 for r in dataset.records if r.label)
    return pos, len(dataset.records) - pos


@dataclass(frozen=True)
class FoldSplit:
    fold_index: int
    train_ids: frozenset[str]
    test_ids: frozenset[str]


def stratified_folds(dataset: Dataset, k: int, seed: int) -> list[FoldSplit]:
    """Partition a dataset into k class-stratified folds.

    Within each class the record ids are shuffled with the seed and split
    into k chunks whose sizes differ by at most one; which folds receive the
    remainder is itself a seeded-random choice. The same (dataset, k, seed)
    always produces identical folds.
    """
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    rng = random.Random(seed)
    test_sets: list[set[str]] = [set() for _ in range(k)]
    for target in (True, False):
        ids = [r.id for r in dataset.records if r.label == target]
        rng.shuffle(ids)
        base, extra = divmod(len(ids), k)
        sizes = [base + 1] * extra + [base] * (k - extra)
        rng.shuffle(sizes)
        start = 0
        for fold, size in enumerate(sizes):
            test_sets[fold].update(ids[start : start + size])
            start += size
    all_ids = frozenset(r.id for r in dataset.records)
    return [
        FoldSplit(
            fold_index=i,
            train_ids=all_ids - frozenset(test),
            test_ids=frozenset(test),
        )
        for i, test in enumerate(test_sets)
    ]
