"""Bibliometric enrichment of records through a DOI-lookup provider.

Records missing year/citations/authors/type get values from, in order of
precedence: a manual-overrides CSV, the local cache, then the provider.
Values already on a record are never overwritten. A provider is called at
most once per DOI; "not found" answers are cached too (negative caching),
so reruns stay cheap and offline.
"""

from __future__ import annotations

import csv
import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Protocol

from .corpus import PAPER_TYPES, Dataset, PaperRecord

log = logging.getLogger(__name__)


class EnrichError(Exception):
    """Base class for enrichment failures."""


class ProviderError(EnrichError):
    """Retryable provider failure (network, auth); distinct from not-found."""


@dataclass(frozen=True)
class BiblioRecord:
    """Looked-up bibliometric data for one DOI; absent fields stay None."""

    doi: str
    year: int | None = None
    n_cites: int | None = None
    n_authors: int | None = None
    paper_type: str | None = None
    fetched_at: float = 0.0

    def __post_init__(self) -> None:
        if not self.doi:
            raise ValueError("doi must be non-empty")
        if self.n_cites is not None and self.n_cites < 0:
            raise ValueError("n_cites must be >= 0")
        if self.n_authors is not None and self.n_authors < 1:
            raise ValueError("n_authors must be >= 1")
        if self.paper_type is not None and self.paper_type not in PAPER_TYPES:
            raise ValueError(f"unknown paper_type {self.paper_type!r}")

    @property
    def empty(self) -> bool:
        return (
            self.year is None
            and self.n_cites is None
            and self.n_authors is None
            and self.paper_type is None
        )


class Provider(Protocol):
    def lookup(self, doi: str) -> BiblioRecord: ...


class StubProvider:
    """Deterministic in-memory provider for tests and offline use.

    Seeded either from a mapping {doi: field dict} or a JSON file of the
    same shape. Unknown DOIs yield an all-absent record; DOIs listed in
    ``failing`` raise a ProviderError.
    """

    def __init__(self, entries: Mapping[str, Mapping] | None = None, failing: Iterable[str] = ()):
        self.entries = {doi: dict(fields) for doi, fields in (entries or {}).items()}
        self.failing = set(failing)
        self.calls = 0

    @classmethod
    def from_file(cls, path) -> "StubProvider":
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh))

    def lookup(self, doi: str) -> BiblioRecord:
        if not doi:
            raise ValueError("doi must be non-empty")
        self.calls += 1
        if doi in self.failing:
            raise ProviderError(f"stub provider configured to fail for {doi}")
        fields = self.entries.get(doi, {})
        return BiblioRecord(doi=doi, fetched_at=time.time(), **fields)


SCOPUS_API_KEY_ENV = "SCOPUS_API_KEY"


class ScopusProvider:
    """DOI lookup against the Scopus abstract-retrieval endpoint.

    Requires an API key in the SCOPUS_API_KEY environment variable (or
    passed explicitly). Field mapping: citedby-count -> n_cites, authors
    list length -> n_authors, cover date year -> year, aggregation type
    Journal/Conference -> paper_type (anything else -> other). Entirely
    optional: nothing in the package calls the network unless this
    provider is configured.
    """

    base_url = "https://api.elsevier.com/content/abstract/doi/"

    def __init__(self, api_key: str | None = None, timeout: float = 10.0):
        self.api_key = api_key or os.environ.get(SCOPUS_API_KEY_ENV)
        self.timeout = timeout

    def lookup(self, doi: str) -> BiblioRecord:
        if not doi:
            raise ValueError("doi must be non-empty")
        if not self.api_key:
            raise ProviderError(
                f"no API key: set {SCOPUS_API_KEY_ENV} or pass api_key explicitly"
            )
        import requests

        try:
            response = requests.get(
                self.base_url + doi,
                headers={"X-ELS-APIKey": self.api_key, "Accept": "application/json"},
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise ProviderError(f"request failed for {doi}: {exc}")
        if response.status_code == 404:
            return BiblioRecord(doi=doi, fetched_at=time.time())
        if response.status_code in (401, 403):
            raise ProviderError(f"authentication rejected ({response.status_code})")
        if response.status_code != 200:
            raise ProviderError(f"unexpected status {response.status_code} for {doi}")
        return self._parse(doi, response.json())

    @staticmethod
    def _parse(doi: str, payload: dict) -> BiblioRecord:
        core = payload.get("abstracts-retrieval-response", {}).get("coredata", {})
        year = None
        cover_date = core.get("prism:coverDate")
        if cover_date:
            try:
                year = int(str(cover_date)[:4])
            except ValueError:
                year = None
        cites = core.get("citedby-count")
        n_cites = int(cites) if cites is not None else None
        authors = payload.get("abstracts-retrieval-response", {}).get("authors", {})
        author_list = authors.get("author") if isinstance(authors, dict) else None
        n_authors = len(author_list) if author_list else None
        agg = str(core.get("prism:aggregationType", "")).lower()
        if agg == "journal":
            paper_type = "journal"
        elif agg in ("conference proceeding", "conference"):
            paper_type = "conference"
        elif agg:
            paper_type = "other"
        else:
            paper_type = None
        return BiblioRecord(
            doi=doi,
            year=year,
            n_cites=n_cites,
            n_authors=n_authors,
            paper_type=paper_type,
            fetched_at=time.time(),
        )


class BiblioCache:
    """Append-friendly JSON-lines cache of DOI lookups.

    Each line is one JSON object; on load, the last entry per DOI wins, so
    a crash mid-append never loses earlier data.
    """

    def __init__(self, path):
        self.path = path
        self._lock = threading.Lock()
        self._entries: dict[str, BiblioRecord] = {}
        if path is not None and os.path.exists(path):
            self._load()

    def _load(self) -> None:
        with open(self.path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    raw = json.loads(line)
                    self._entries[raw["doi"]] = BiblioRecord(**raw)
                except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                    raise EnrichError(f"{self.path}:{line_no}: corrupt cache line: {exc}")

    def __contains__(self, doi: str) -> bool:
        return doi in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, doi: str) -> BiblioRecord | None:
        return self._entries.get(doi)

    def put(self, record: BiblioRecord) -> None:
        """Store and append to the backing file; writes are serialized."""
        with self._lock:
            self._entries[record.doi] = record
            if self.path is not None:
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(self._asdict(record), sort_keys=True) + "\n")

    @staticmethod
    def _asdict(record: BiblioRecord) -> dict:
        return {
            "doi": record.doi,
            "year": record.year,
            "n_cites": record.n_cites,
            "n_authors": record.n_authors,
            "paper_type": record.paper_type,
            "fetched_at": record.fetched_at,
        }


def lookup(provider: Provider, doi: str) -> BiblioRecord:
    """Single provider lookup; see Provider for the error contract."""
    if not doi:
        raise ValueError("doi must be non-empty")
    return provider.lookup(doi)


def load_overrides(path) -> dict[str, BiblioRecord]:
    """Manual-overrides CSV: doi,year,n_cites,n_authors,paper_type."""
    overrides: dict[str, BiblioRecord] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        expected = {"doi", "year", "n_cites", "n_authors", "paper_type"}
        if reader.fieldnames is None or set(reader.fieldnames) != expected:
            raise EnrichError(
                f"{path}: overrides header must be doi,year,n_cites,n_authors,paper_type"
            )
        for row_num, row in enumerate(reader, start=2):
            try:
                overrides[row["doi"]] = BiblioRecord(
                    doi=row["doi"],
                    year=int(row["year"]) if row["year"].strip() else None,
                    n_cites=int(row["n_cites"]) if row["n_cites"].strip() else None,
                    n_authors=int(row["n_authors"]) if row["n_authors"].strip() else None,
                    paper_type=row["paper_type"].strip().lower() or None,
                )
            except ValueError as exc:
                raise EnrichError(f"{path}: row {row_num}: {exc}")
    return overrides


@dataclass
class EnrichResult:
    """Outcome of :func:`enrich_dataset`."""

    dataset: Dataset
    filled_records: int
    errors: list[tuple[str, str]]  # (record id, message)

    @property
    def ok(self) -> bool:
        return not self.errors


def _needs_enrichment(record: PaperRecord) -> bool:
    return record.doi is not None and (
        record.year is None
        or record.n_cites is None
        or record.n_authors is None
        or record.paper_type is None
    )


def _merge(record: PaperRecord, biblio: BiblioRecord) -> PaperRecord:
    """Fill absent fields only; existing values win."""
    return PaperRecord(
        id=record.id,
        title=record.title,
        abstract=record.abstract,
        label=record.label,
        year=record.year if record.year is not None else biblio.year,
        n_cites=record.n_cites if record.n_cites is not None else biblio.n_cites,
        n_authors=record.n_authors if record.n_authors is not None else biblio.n_authors,
        paper_type=record.paper_type if record.paper_type is not None else biblio.paper_type,
        doi=record.doi,
    )


def enrich_dataset(
    dataset: Dataset,
    provider: Provider | None,
    cache: BiblioCache,
    overrides: Mapping[str, BiblioRecord] | None = None,
    parallelism: int = 1,
) -> EnrichResult:
    """Fill absent bibliometric fields of every record with a DOI.

    Precedence per missing field: overrides, then cache, then provider.
    The provider is consulted at most once per DOI and never for a DOI
    already cached; its answers (including not-found) are cached. Provider
    errors are collected per record and do not abort the rest. The input
    dataset is not modified. With ``provider=None`` only overrides and
    cache apply.
    """
    overrides = dict(overrides or {})
    todo = [r for r in dataset.records if _needs_enrichment(r)]
    errors: list[tuple[str, str]] = []

    # resolve which DOIs still need a provider call
    needed_dois: list[str] = []
    seen: set[str] = set()
    for record in todo:
        doi = record.doi
        if doi in seen or doi in cache or provider is None:
            continue
        merged = _merge(record, overrides[doi]) if doi in overrides else record
        if _needs_enrichment(merged):
            seen.add(doi)
            needed_dois.append(doi)

    fetched: dict[str, BiblioRecord] = {}
    failures: dict[str, str] = {}

    def fetch(doi: str) -> None:
        try:
            result = provider.lookup(doi)
            cache.put(result)
            fetched[doi] = result
        except ProviderError as exc:
            failures[doi] = str(exc)

    if needed_dois:
        if parallelism > 1:
            with ThreadPoolExecutor(max_workers=parallelism) as pool:
                list(pool.map(fetch, needed_dois))
        else:
            for doi in needed_dois:
                fetch(doi)

    filled = 0
    new_records: list[PaperRecord] = []
    for record in dataset.records:
        if not _needs_enrichment(record):
            new_records.append(record)
            continue
        merged = record
        doi = record.doi
        if doi in overrides:
            merged = _merge(merged, overrides[doi])
        cached = cache.get(doi)
        if cached is not None and _needs_enrichment(merged):
            merged = _merge(merged, cached)
        if doi in failures:
            errors.append((record.id, failures[doi]))
        if merged != record:
            filled += 1
        new_records.append(merged)
    return EnrichResult(
        dataset=dataset.with_records(new_records), filled_records=filled, errors=errors
    )
