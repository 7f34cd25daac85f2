"""Class association rules: representation, matching and quality measures.

A rule is a conjunction of conditions over one paper record plus a predicted
boolean class (the screening decision). Text conditions compare stemmed word
sets against the stemmed record text, sharing the pipeline in
:mod:`rulesieve.textmine`.

Measures over a dataset (support, confidence, fitness) are computed through
a per-dataset :class:`EvalContext` that holds vectorized per-record features;
the per-record :func:`matches_antecedent` defines the reference semantics.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .corpus import Dataset, PaperRecord
from .textmine import cached_stems

NUMERIC_FIELDS = ("nCites", "nAuthors", "year")
TEXT_FIELDS = ("title", "abstract", "titleAbstract")
CATEGORY_FIELD = "paperType"

NUMERIC_COMPARATORS = ("gt", "lt", "ge", "le")
TEXT_COMPARATORS = ("containsAll", "containsAny")
CATEGORY_COMPARATORS = ("equals", "notEquals")

_CMP_SYMBOL = {"gt": ">", "lt": "<", "ge": ">=", "le": "<=", "equals": "=", "notEquals": "!="}
_SYMBOL_CMP = {v: k for k, v in _CMP_SYMBOL.items()}


class RuleError(Exception):
    """Raised for malformed rules or rule text."""


@dataclass(frozen=True)
class Condition:
    """One comparison over a record field; ``negated`` inverts its outcome."""

    field: str
    comparator: str
    value: int | str | tuple[str, ...]
    negated: bool = False

    def __post_init__(self) -> None:
        if self.field in NUMERIC_FIELDS:
            if self.comparator not in NUMERIC_COMPARATORS:
                raise RuleError(f"{self.comparator} not valid for numeric field {self.field}")
            if not isinstance(self.value, int) or isinstance(self.value, bool):
                raise RuleError(f"numeric condition on {self.field} needs an int value")
        elif self.field in TEXT_FIELDS:
            if self.comparator not in TEXT_COMPARATORS:
                raise RuleError(f"{self.comparator} not valid for text field {self.field}")
            stems = tuple(sorted(set(self.value)))
            if not stems:
                raise RuleError("text condition needs a non-empty word set")
            object.__setattr__(self, "value", stems)
        elif self.field == CATEGORY_FIELD:
            if self.comparator not in CATEGORY_COMPARATORS:
                raise RuleError(f"{self.comparator} not valid for {CATEGORY_FIELD}")
            if not isinstance(self.value, str):
                raise RuleError("paperType condition needs a category value")
        else:
            raise RuleError(f"unknown field {self.field!r}")

    @property
    def is_bibliometric(self) -> bool:
        return self.field in NUMERIC_FIELDS


@dataclass
class RuleMeasures:
    """Quality measures of a rule on one dataset.

    n_match counts records satisfying the antecedent; n_agree those that
    additionally carry the predicted label. confidence is None when the
    antecedent matches nothing (no-support marker).
    """

    fitness: float
    support: float
    confidence: float | None
    n_match: int
    n_agree: int
    n_pos: int
    n_neg: int
    dataset_key: int


@dataclass(eq=True, unsafe_hash=True)
class Rule:
    """Conjunction of conditions predicting the screening class."""

    conditions: tuple[Condition, ...]
    predicted_class: bool
    measures: RuleMeasures | None = field(default=None, compare=False, hash=False)

    def __post_init__(self) -> None:
        self.conditions = tuple(self.conditions)
        if not self.conditions:
            raise RuleError("rule needs at least one condition")

    def __len__(self) -> int:
        return len(self.conditions)

    @property
    def n_bibliometric(self) -> int:
        return sum(1 for c in self.conditions if c.is_bibliometric)


def _compare_numeric(comparator: str, left: int, right: int) -> bool:
    if comparator == "gt":
        return left > right
    if comparator == "lt":
        return left < right
    if comparator == "ge":
        return left >= right
    return left <= right


def _condition_holds(cond: Condition, record: PaperRecord) -> bool:
    value = record.get_field(cond.field)
    if value is None:
        # absent field: the condition never holds, negated or not
        return False
    if cond.field in NUMERIC_FIELDS:
        result = _compare_numeric(cond.comparator, value, cond.value)
    elif cond.field in TEXT_FIELDS:
        stems = cached_stems(value)
        if cond.comparator == "containsAny":
            result = any(s in stems for s in cond.value)
        else:
            result = all(s in stems for s in cond.value)
    else:
        result = (value == cond.value) == (cond.comparator == "equals")
    return not result if cond.negated else result


def matches_antecedent(rule: Rule, record: PaperRecord) -> bool:
    """True iff every condition of the rule holds for the record."""
    return all(_condition_holds(c, record) for c in rule.conditions)


class NoSupport(Exception):
    """Raised when confidence is requested for a rule matching no record."""


class EvalContext:
    """Vectorized per-record features of one dataset for fast rule counting."""

    def __init__(self, dataset: Dataset):
        records = dataset.records
        self.n = len(records)
        self.labels = np.fromiter((r.label for r in records), dtype=bool, count=self.n)
        self.n_pos = int(self.labels.sum())
        self.n_neg = self.n - self.n_pos
        self._numeric: dict[str, tuple[np.ndarray, np.ndarray]] = {}
        for fname in NUMERIC_FIELDS:
            vals = np.zeros(self.n, dtype=np.int64)
            present = np.zeros(self.n, dtype=bool)
            for i, r in enumerate(records):
                v = r.get_field(fname)
                if v is not None:
                    vals[i] = v
                    present[i] = True
            self._numeric[fname] = (vals, present)
        ptypes = [r.paper_type for r in records]
        self._ptype = np.array([p if p is not None else "" for p in ptypes], dtype=object)
        self._ptype_present = np.array([p is not None for p in ptypes], dtype=bool)
        self._stem_sets = {
            "title": [cached_stems(r.title) for r in records],
            "abstract": [cached_stems(r.abstract) for r in records],
            "titleAbstract": [cached_stems(r.title + " " + r.abstract) for r in records],
        }
        self._stem_columns: dict[tuple[str, str], np.ndarray] = {}
        self._cond_cache: dict[Condition, np.ndarray] = {}

    def _stem_column(self, fname: str, stem: str) -> np.ndarray:
        key = (fname, stem)
        col = self._stem_columns.get(key)
        if col is None:
            sets = self._stem_sets[fname]
            col = np.fromiter((stem in s for s in sets), dtype=bool, count=self.n)
            self._stem_columns[key] = col
        return col

    def condition_mask(self, cond: Condition) -> np.ndarray:
        mask = self._cond_cache.get(cond)
        if mask is not None:
            return mask
        if cond.field in NUMERIC_FIELDS:
            vals, present = self._numeric[cond.field]
            if cond.comparator == "gt":
                raw = vals > cond.value
            elif cond.comparator == "lt":
                raw = vals < cond.value
            elif cond.comparator == "ge":
                raw = vals >= cond.value
            else:
                raw = vals <= cond.value
            mask = present & (~raw if cond.negated else raw)
        elif cond.field in TEXT_FIELDS:
            cols = [self._stem_column(cond.field, s) for s in cond.value]
            if cond.comparator == "containsAny":
                raw = np.logical_or.reduce(cols)
            else:
                raw = np.logical_and.reduce(cols)
            mask = ~raw if cond.negated else raw
        else:
            raw = self._ptype == cond.value
            if cond.comparator == "notEquals":
                raw = ~raw
            mask = self._ptype_present & (~raw if cond.negated else raw)
        self._cond_cache[cond] = mask
        return mask

    def antecedent_mask(self, rule: Rule) -> np.ndarray:
        mask = self.condition_mask(rule.conditions[0])
        for cond in rule.conditions[1:]:
            mask = mask & self.condition_mask(cond)
        return mask

    def counts(self, rule: Rule) -> tuple[int, int]:
        """(antecedent matches, matches agreeing with the predicted class)."""
        mask = self.antecedent_mask(rule)
        n_match = int(mask.sum())
        if rule.predicted_class:
            n_agree = int((mask & self.labels).sum())
        else:
            n_agree = n_match - int((mask & self.labels).sum())
        return n_match, n_agree


_dataset_serials = iter(range(1, 2**62))


def dataset_serial(dataset: Dataset) -> int:
    """Process-unique, never-reused identity token for a dataset."""
    serial = dataset._eval_cache.get("serial")
    if serial is None:
        serial = next(_dataset_serials)
        dataset._eval_cache["serial"] = serial
    return serial


def eval_context(dataset: Dataset) -> EvalContext:
    """Context for a dataset, cached on the dataset object."""
    ctx = dataset._eval_cache.get("ctx")
    if ctx is None:
        ctx = EvalContext(dataset)
        dataset._eval_cache["ctx"] = ctx
    return ctx


def evaluate(rule: Rule, dataset: Dataset) -> RuleMeasures:
    """Compute and attach all measures of a rule on a dataset."""
    cached = rule.measures
    if cached is not None and cached.dataset_key == dataset_serial(dataset):
        return cached
    if len(dataset) == 0:
        raise ValueError("cannot evaluate a rule on an empty dataset")
    ctx = eval_context(dataset)
    n_match, n_agree = ctx.counts(rule)
    support = n_agree / ctx.n
    confidence = None if n_match == 0 else n_agree / n_match
    if ctx.n_pos == 0 or ctx.n_neg == 0:
        raise ValueError("fitness needs at least one record of each class")
    pos_match = n_agree if rule.predicted_class else n_match - n_agree
    neg_match = n_match - pos_match
    if rule.predicted_class:
        fitness = pos_match / ctx.n_pos - neg_match / ctx.n_neg
    else:
        fitness = neg_match / ctx.n_neg - pos_match / ctx.n_pos
    measures = RuleMeasures(
        fitness=fitness,
        support=support,
        confidence=confidence,
        n_match=n_match,
        n_agree=n_agree,
        n_pos=ctx.n_pos,
        n_neg=ctx.n_neg,
        dataset_key=dataset_serial(dataset),
    )
    rule.measures = measures
    return measures


def support(rule: Rule, dataset: Dataset) -> float:
    """Fraction of records matching the antecedent with the predicted label."""
    return evaluate(rule, dataset).support


def confidence(rule: Rule, dataset: Dataset) -> float:
    """Agreeing matches over all antecedent matches.

    Raises :class:`NoSupport` when the antecedent matches no record; the
    value is undefined there, never 0 or NaN.
    """
    value = evaluate(rule, dataset).confidence
    if value is None:
        raise NoSupport("antecedent matches no record; confidence undefined")
    return value


def fitness(rule: Rule, dataset: Dataset) -> float:
    """Class-coverage difference in [-1, 1].

    For a rule predicting True: fraction of positives matching the rule
    minus fraction of negatives matching the antecedent; symmetric with the
    classes swapped for rules predicting False.
    """
    return evaluate(rule, dataset).fitness


# ---------------------------------------------------------------------------
# Rendering and parsing


def _render_condition(cond: Condition) -> str:
    if cond.field in NUMERIC_FIELDS:
        body = f"{cond.field} {_CMP_SYMBOL[cond.comparator]} {cond.value}"
    elif cond.field in TEXT_FIELDS:
        body = f"{cond.field} {cond.comparator} {{{', '.join(cond.value)}}}"
    else:
        body = f"{cond.field} {_CMP_SYMBOL[cond.comparator]} {cond.value}"
    return f"NOT ({body})" if cond.negated else body


def render(rule: Rule) -> str:
    """Deterministic IF/AND/THEN text of a rule; :func:`parse_rule` inverts it."""
    conds = " AND ".join(_render_condition(c) for c in rule.conditions)
    return f"IF {conds} THEN isCandidate = {rule.predicted_class}"


_RULE_RE = re.compile(r"^IF (?P<antc>.+) THEN isCandidate = (?P<cls>True|False)$")
_NOT_RE = re.compile(r"^NOT \((?P<body>.+)\)$")
_NUM_RE = re.compile(r"^(?P<field>\w+) (?P<op>>=|<=|>|<) (?P<value>-?\d+)$")
_TEXT_RE = re.compile(r"^(?P<field>\w+) (?P<op>containsAll|containsAny) \{(?P<words>[^{}]*)\}$")
_CAT_RE = re.compile(r"^paperType (?P<op>=|!=) (?P<value>\S+)$")


def _parse_condition(text: str) -> Condition:
    text = text.strip()
    negated = False
    m = _NOT_RE.match(text)
    if m:
        negated = True
        text = m.group("body")
    m = _NUM_RE.match(text)
    if m and m.group("field") in NUMERIC_FIELDS:
        return Condition(
            field=m.group("field"),
            comparator=_SYMBOL_CMP[m.group("op")],
            value=int(m.group("value")),
            negated=negated,
        )
    m = _TEXT_RE.match(text)
    if m and m.group("field") in TEXT_FIELDS:
        words = tuple(w.strip() for w in m.group("words").split(",") if w.strip())
        return Condition(
            field=m.group("field"),
            comparator=m.group("op"),
            value=words,
            negated=negated,
        )
    m = _CAT_RE.match(text)
    if m:
        return Condition(
            field=CATEGORY_FIELD,
            comparator=_SYMBOL_CMP[m.group("op")],
            value=m.group("value"),
            negated=negated,
        )
    raise RuleError(f"unparsable condition: {text!r}")


def parse_rule(text: str) -> Rule:
    """Parse the output of :func:`render` back into a rule."""
    m = _RULE_RE.match(text.strip())
    if not m:
        raise RuleError(f"unparsable rule text: {text!r}")
    conditions = tuple(_parse_condition(part) for part in m.group("antc").split(" AND "))
    return Rule(conditions=conditions, predicted_class=m.group("cls") == "True")


def save_rules(rules: Sequence[Rule], path) -> None:
    """Tab-separated export: rendered rule plus measure columns.

    Undefined confidence is written as the word "undefined"; rules without
    cached measures get empty measure cells.
    """
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("rule\tfitness\tsupport\tconfidence\n")
        for rule in rules:
            m = rule.measures
            if m is None:
                fh.write(f"{render(rule)}\t\t\t\n")
            else:
                conf = "undefined" if m.confidence is None else repr(m.confidence)
                fh.write(f"{render(rule)}\t{m.fitness!r}\t{m.support!r}\t{conf}\n")


def load_rules(path) -> list[Rule]:
    """Read rules from an export file; measures are not restored."""
    rules: list[Rule] = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        if not header.startswith("rule\t"):
            raise RuleError(f"{path}: not a rules export file")
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            rules.append(parse_rule(line.split("\t", 1)[0]))
    return rules
