"""Classification metrics for screening evaluation.

The positive class is a paper selected as relevant. Metrics with a zero
denominator are reported as None (an explicit undefined marker), never as
0 or NaN, and excluded from aggregation with an exclusion count.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self) -> None:
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


def confusion(predictions: Sequence[bool], truths: Sequence[bool]) -> ConfusionMatrix:
    """Count prediction outcomes; positive class is True."""
    if len(predictions) != len(truths):
        raise ValueError(
            f"length mismatch: {len(predictions)} predictions vs {len(truths)} truths"
        )
    if len(predictions) == 0:
        raise ValueError("cannot build a confusion matrix from zero records")
    tp = tn = fp = fn = 0
    for pred, truth in zip(predictions, truths):
        if pred and truth:
            tp += 1
        elif pred and not truth:
            fp += 1
        elif not pred and truth:
            fn += 1
        else:
            tn += 1
    return ConfusionMatrix(tp=tp, tn=tn, fp=fp, fn=fn)


METRIC_NAMES = ("recall", "precision", "specificity", "accuracy", "balanced_accuracy")


@dataclass(frozen=True)
class MetricsReport:
    """The five evaluation metrics plus run metadata."""

    recall: float | None
    precision: float | None
    specificity: float | None
    accuracy: float | None
    balanced_accuracy: float | None
    dataset: str = ""
    seed: int = 0
    fold: int = 0
    config_hash: str = ""

    def values(self) -> dict[str, float | None]:
        return {name: getattr(self, name) for name in METRIC_NAMES}


def _ratio(num: int, den: int) -> float | None:
    return None if den == 0 else num / den


def metrics(
    cm: ConfusionMatrix,
    dataset: str = "",
    seed: int = 0,
    fold: int = 0,
    config_hash: str = "",
) -> MetricsReport:
    """Recall, precision, specificity, accuracy and balanced accuracy.

    Balanced accuracy is exactly (recall + specificity) / 2 and is
    undefined whenever either side is.
    """
    if cm.total < 1:
        raise ValueError("metrics need at least one evaluated record")
    recall = _ratio(cm.tp, cm.tp + cm.fn)
    precision = _ratio(cm.tp, cm.tp + cm.fp)
    specificity = _ratio(cm.tn, cm.tn + cm.fp)
    accuracy = _ratio(cm.tp + cm.tn, cm.total)
    balanced = None if recall is None or specificity is None else (recall + specificity) / 2
    return MetricsReport(
        recall=recall,
        precision=precision,
        specificity=specificity,
        accuracy=accuracy,
        balanced_accuracy=balanced,
        dataset=dataset,
        seed=seed,
        fold=fold,
        config_hash=config_hash,
    )


@dataclass(frozen=True)
class MetricAggregate:
    mean: float | None
    stdev: float | None
    excluded: int


def aggregate_metrics(reports: Sequence[MetricsReport]) -> dict[str, MetricAggregate]:
    """Mean and sample stdev per metric, skipping undefined values."""
    import statistics

    out: dict[str, MetricAggregate] = {}
    for name in METRIC_NAMES:
        values = [getattr(r, name) for r in reports]
        defined = [v for v in values if v is not None]
        out[name] = MetricAggregate(
            mean=statistics.mean(defined) if defined else None,
            stdev=statistics.stdev(defined) if len(defined) > 1 else None,
            excluded=len(values) - len(defined),
        )
    return out
