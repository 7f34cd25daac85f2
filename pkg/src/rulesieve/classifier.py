"""Building an ordered rule-based classifier from mined rules.

Rules get a base ordering by fitness, are re-sorted by one of four
pruning/sorting strategies (CBA, CMAR, CPAR, SCBA), and then pass through a
coverage-based selection that keeps a rule only if it covers a training
record no earlier rule covered. Prediction applies the first matching rule
and falls back to the majority class.
"""

from __future__ import annotations

import json
import math
import statistics
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .corpus import Dataset, PaperRecord
from .rules import Rule, RuleMeasures, evaluate, eval_context, matches_antecedent, parse_rule, render

STRATEGIES = ("CBA", "CMAR", "CPAR", "SCBA")


class ClassifierError(Exception):
    """Raised when a classifier cannot be built or loaded."""


def _measures(rule: Rule) -> RuleMeasures:
    if rule.measures is None:
        raise ClassifierError(f"rule has no cached measures: {render(rule)}")
    return rule.measures


def _chi_square(m: RuleMeasures, predicted: bool) -> float:
    """Chi-square statistic of the 2x2 antecedent-vs-class contingency."""
    n = m.n_pos + m.n_neg
    class_total = m.n_pos if predicted else m.n_neg
    a = m.n_agree
    b = m.n_match - m.n_agree
    c = class_total - a
    d = (n - class_total) - b
    margins = (a + b) * (c + d) * (a + c) * (b + d)
    if margins == 0:
        return 0.0
    return n * (a * d - b * c) ** 2 / margins


def _laplace(m: RuleMeasures) -> float:
    return (m.n_agree + 1) / (m.n_match + 2)


def _scba_score(m: RuleMeasures, predicted: bool) -> float:
    """Signed confidence margin weighted by the opposite class prior.

    (agreeing - disagreeing) / antecedentMatches lies in [-1, 1]; weighting
    it by the prior of the class the rule discriminates against boosts
    minority-class rules, which is what keeps recall up on imbalanced
    screening data.
    """
    if m.n_match == 0:
        return -math.inf
    margin = (2 * m.n_agree - m.n_match) / m.n_match
    n = m.n_pos + m.n_neg
    opposite_prior = (m.n_neg if predicted else m.n_pos) / n
    return margin * opposite_prior


def _strategy_key(strategy: str) -> Callable[[Rule], tuple]:
    def tail(rule: Rule) -> tuple:
        return (len(rule), render(rule))

    if strategy == "CBA":
        def key(rule: Rule) -> tuple:
            m = _measures(rule)
            conf = m.confidence if m.confidence is not None else -math.inf
            return (-m.n_match, -conf, -m.support, *tail(rule))
    elif strategy == "CMAR":
        def key(rule: Rule) -> tuple:
            m = _measures(rule)
            conf = m.confidence if m.confidence is not None else -math.inf
            return (-conf, -_chi_square(m, rule.predicted_class), -m.n_match, *tail(rule))
    elif strategy == "CPAR":
        def key(rule: Rule) -> tuple:
            return (-_laplace(_measures(rule)), *tail(rule))
    elif strategy == "SCBA":
        def key(rule: Rule) -> tuple:
            return (-_scba_score(_measures(rule), rule.predicted_class), *tail(rule))
    else:
        raise ClassifierError(f"unknown strategy {strategy!r}; choose from {STRATEGIES}")
    return key


def sort_rules(rules: Sequence[Rule], strategy: str) -> list[Rule]:
    """Order rules by a strategy's quality criterion, best first.

    All strategies break remaining ties by shorter rule, then rendered
    text, so the order is total and deterministic.
    """
    return sorted(rules, key=_strategy_key(strategy))


def _coverage_select(
    sorted_rules: Sequence[Rule], training: Dataset
) -> tuple[list[Rule], list[int]]:
    ctx = eval_context(training)
    uncovered = np.ones(ctx.n, dtype=bool)
    selected: list[Rule] = []
    newly_covered: list[int] = []
    for rule in sorted_rules:
        if not uncovered.any():
            break
        covers = ctx.antecedent_mask(rule) & (ctx.labels == rule.predicted_class)
        newly = covers & uncovered
        count = int(newly.sum())
        if count > 0:
            selected.append(rule)
            newly_covered.append(count)
            uncovered &= ~covers
    return selected, newly_covered


def coverage_select(sorted_rules: Sequence[Rule], training: Dataset) -> list[Rule]:
    """Keep each rule that covers at least one still-uncovered record.

    A rule covers a record when its antecedent matches and its predicted
    class equals the record label. Selection preserves the input order and
    stops as soon as every record is covered.
    """
    return _coverage_select(sorted_rules, training)[0]


@dataclass
class RuleClassifier:
    """Ordered rules plus a default class; the deployable model."""

    ordered_rules: tuple[Rule, ...]
    default_class: bool
    strategy_used: str
    training_stats: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        self.ordered_rules = tuple(self.ordered_rules)
        if not self.ordered_rules:
            raise ClassifierError("a classifier needs at least one rule")


def build_classifier(
    archive_rules: Sequence[Rule], training: Dataset, strategy: str = "SCBA"
) -> RuleClassifier:
    """Assemble a classifier from mined rules and their training fold."""
    if not archive_rules:
        raise ClassifierError(
            "no rules to build from; lower the archive threshold or run more generations"
        )
    for rule in archive_rules:
        evaluate(rule, training)
    base = sorted(
        archive_rules,
        key=lambda r: (-_measures(r).fitness, len(r), render(r)),
    )
    ordered = sort_rules(base, strategy)
    selected, counts = _coverage_select(ordered, training)
    if not selected:
        raise ClassifierError("no rule covers any training record")
    pos = sum(1 for r in training.records if r.label)
    default_class = pos > len(training.records) - pos
    return RuleClassifier(
        ordered_rules=tuple(selected),
        default_class=default_class,
        strategy_used=strategy,
        training_stats=tuple(counts),
    )


def predict(classifier: RuleClassifier, record: PaperRecord) -> bool:
    """First matching rule decides; otherwise the default class."""
    for rule in classifier.ordered_rules:
        if matches_antecedent(rule, record):
            return rule.predicted_class
    return classifier.default_class


def predict_dataset(classifier: RuleClassifier, dataset: Dataset) -> np.ndarray:
    """Vectorized first-match predictions for every record of a dataset."""
    ctx = eval_context(dataset)
    out = np.full(ctx.n, classifier.default_class, dtype=bool)
    decided = np.zeros(ctx.n, dtype=bool)
    for rule in classifier.ordered_rules:
        hit = ctx.antecedent_mask(rule) & ~decided
        out[hit] = rule.predicted_class
        decided |= hit
        if decided.all():
            break
    return out


# ---------------------------------------------------------------------------
# Interpretability statistics


@dataclass(frozen=True)
class ClassRuleStats:
    """Rule properties for one predicted class."""

    classifier_rules: int
    generated_rules: int
    mean_length: float | None
    stdev_length: float | None
    biblio_operators: int


@dataclass(frozen=True)
class RuleStats:
    """Interpretability statistics split by predicted class."""

    positive: ClassRuleStats
    negative: ClassRuleStats

    @property
    def classifier_rules(self) -> int:
        return self.positive.classifier_rules + self.negative.classifier_rules

    @property
    def generated_rules(self) -> int:
        return self.positive.generated_rules + self.negative.generated_rules

    @property
    def biblio_operators(self) -> int:
        return self.positive.biblio_operators + self.negative.biblio_operators


def _class_stats(classifier_rules: Sequence[Rule], generated: Sequence[Rule]) -> ClassRuleStats:
    lengths = [len(r) for r in generated]
    return ClassRuleStats(
        classifier_rules=len(classifier_rules),
        generated_rules=len(generated),
        mean_length=statistics.mean(lengths) if lengths else None,
        stdev_length=statistics.stdev(lengths) if len(lengths) > 1 else None,
        biblio_operators=sum(r.n_bibliometric for r in generated),
    )


def rule_stats(classifier: RuleClassifier, all_generated_rules: Sequence[Rule]) -> RuleStats:
    """Classifier size, rule lengths and bibliometric-operator counts.

    Rule length and operator counts are computed over all generated rules;
    classifier_rules counts the rules actually selected. Everything is
    split by the class a rule predicts.
    """
    return RuleStats(
        positive=_class_stats(
            [r for r in classifier.ordered_rules if r.predicted_class],
            [r for r in all_generated_rules if r.predicted_class],
        ),
        negative=_class_stats(
            [r for r in classifier.ordered_rules if not r.predicted_class],
            [r for r in all_generated_rules if not r.predicted_class],
        ),
    )


# ---------------------------------------------------------------------------
# Persistence


def classifier_text(classifier: RuleClassifier) -> str:
    """Human-readable ordered rule list with measures and the default."""
    lines = []
    for i, rule in enumerate(classifier.ordered_rules, start=1):
        m = rule.measures
        if m is not None:
            conf = "undefined" if m.confidence is None else f"{m.confidence:.4f}"
            lines.append(
                f"{i}. {render(rule)}"
                f"    [fitness={m.fitness:.4f} support={m.support:.4f} confidence={conf}]"
            )
        else:
            lines.append(f"{i}. {render(rule)}")
    lines.append(f"DEFAULT: isCandidate = {classifier.default_class}")
    return "\n".join(lines) + "\n"


def save_classifier(classifier: RuleClassifier, path) -> None:
    """Write the classifier as deterministic, machine-readable JSON."""
    payload = {
        "format": "rulesieve-classifier",
        "version": 1,
        "strategy": classifier.strategy_used,
        "default_class": classifier.default_class,
        "training_stats": list(classifier.training_stats),
        "rules": [
            {
                "text": render(rule),
                "measures": None
                if rule.measures is None
                else {
                    "fitness": rule.measures.fitness,
                    "support": rule.measures.support,
                    "confidence": rule.measures.confidence,
                    "n_match": rule.measures.n_match,
                    "n_agree": rule.measures.n_agree,
                    "n_pos": rule.measures.n_pos,
                    "n_neg": rule.measures.n_neg,
                },
            }
            for rule in classifier.ordered_rules
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_classifier(path) -> RuleClassifier:
    """Rebuild a classifier saved by :func:`save_classifier`."""
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != "rulesieve-classifier":
        raise ClassifierError(f"{path}: not a classifier file")
    rules = []
    for entry in payload["rules"]:
        rule = parse_rule(entry["text"])
        m = entry.get("measures")
        if m is not None:
            rule.measures = RuleMeasures(dataset_key=0, **m)
        rules.append(rule)
    return RuleClassifier(
        ordered_rules=tuple(rules),
        default_class=bool(payload["default_class"]),
        strategy_used=payload.get("strategy", "unknown"),
        training_stats=tuple(payload.get("training_stats", ())),
    )
