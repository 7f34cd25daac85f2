"""Cross-validated, multi-seed experiment runner.

For every (seed, fold) pair the pipeline builds the vocabulary on the
training split only, prunes the grammar to the fields the data provides,
evolves rules, assembles a classifier and evaluates it on the test split.
Outputs are a per-run metrics CSV, an aggregate JSON, per-run rule and
classifier exports, and per-run evolution logs. Two executions with the
same configuration produce byte-identical per-run CSVs.
"""

from __future__ import annotations

import concurrent.futures
import csv
import dataclasses
import hashlib
import json
import logging
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

from .classifier import (
    ClassifierError,
    RuleClassifier,
    RuleStats,
    build_classifier,
    classifier_text,
    predict_dataset,
    rule_stats,
    save_classifier,
)
from .corpus import BIBLIO_FIELDS, Dataset, FoldSplit, available_fields, load_dataset, stratified_folds
from .evolve import EvolveConfig, run_evolution
from .grammar import GrammarSpec, default_grammar, parse_grammar, prune_grammar
from .metrics import MetricsReport, aggregate_metrics, confusion, metrics
from .rules import Rule, save_rules
from .textmine import (
    Vocabulary,
    class_vocabulary,
    load_vocabulary,
    relevant_vocabulary,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunConfig:
    """Everything one experiment needs, CLI- and file-configurable."""

    dataset_path: str = ""
    evolve: EvolveConfig = field(default_factory=EvolveConfig)
    strategy: str = "SCBA"
    k_folds: int = 5
    seeds: tuple[int, ...] = (1, 2, 3, 4, 5, 6, 7, 8, 9, 10)
    top_k: int = 100
    vocabulary_path: str | None = None
    grammar_path: str | None = None
    terminals_path: str | None = None
    no_biblio: bool = False
    output_dir: str = "rulesieve-out"
    jobs: int = 1

    def __post_init__(self) -> None:
        if not self.seeds:
            raise ValueError("seeds must be non-empty")
        if self.k_folds < 2:
            raise ValueError("k_folds must be >= 2")

    def config_hash(self) -> str:
        """Short digest of every setting that shapes the results."""
        payload = {
            "evolve": dataclasses.asdict(replace(self.evolve, seed=0)),
            "strategy": self.strategy,
            "k_folds": self.k_folds,
            "top_k": self.top_k,
            "vocabulary_path": self.vocabulary_path,
            "grammar_path": self.grammar_path,
            "terminals_path": self.terminals_path,
            "no_biblio": self.no_biblio,
        }
        blob = json.dumps(payload, sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:12]


def mix_seed(base_seed: int, fold_index: int) -> int:
    """Per-run seed: a documented linear mix of base seed and fold index."""
    return (base_seed * 1_000_003 + fold_index) % 2**31


def load_grammar(config: RunConfig) -> GrammarSpec:
    if config.grammar_path is None and config.terminals_path is None:
        return default_grammar()
    from importlib import resources

    data = resources.files("rulesieve.data")
    grammar_text = (
        Path(config.grammar_path).read_text("utf-8")
        if config.grammar_path
        else data.joinpath("grammar.bnf").read_text("utf-8")
    )
    terminal_text = (
        Path(config.terminals_path).read_text("utf-8")
        if config.terminals_path
        else data.joinpath("terminals.xml").read_text("utf-8")
    )
    return parse_grammar(grammar_text, terminal_text)


def build_vocabulary(train: Dataset, config: RunConfig) -> Vocabulary:
    """Training-split vocabulary: user file if given, else the class difference."""
    if config.vocabulary_path:
        return load_vocabulary(config.vocabulary_path)
    pos = class_vocabulary(train, True, config.top_k)
    neg = class_vocabulary(train, False, config.top_k)
    return relevant_vocabulary(pos, neg)


def fields_for(train: Dataset, no_biblio: bool) -> frozenset[str]:
    fields = available_fields(train)
    if no_biblio:
        fields = fields - set(BIBLIO_FIELDS)
    return fields


@dataclass
class RunResult:
    """Artifacts of one (seed, fold) run."""

    report: MetricsReport
    stats: RuleStats
    n_generated: int
    classifier: RuleClassifier
    rules: list[Rule]


def single_run(
    dataset: Dataset,
    fold: FoldSplit,
    base_seed: int,
    config: RunConfig,
    grammar: GrammarSpec | None = None,
    log_path=None,
) -> RunResult:
    """Train on a fold's training ids, evaluate on its test ids."""
    grammar = grammar if grammar is not None else load_grammar(config)
    train = dataset.subset(fold.train_ids)
    test = dataset.subset(fold.test_ids)
    vocab = build_vocabulary(train, config)
    pruned = prune_grammar(grammar, fields_for(train, config.no_biblio))
    evolve_config = replace(config.evolve, seed=mix_seed(base_seed, fold.fold_index))
    rules = run_evolution(train, pruned, vocab, evolve_config, log_path=log_path)
    clf = build_classifier(rules, train, config.strategy)
    predictions = predict_dataset(clf, test)
    truths = [r.label for r in test.records]
    cm = confusion(list(predictions), truths)
    report = metrics(
        cm,
        dataset=dataset.name,
        seed=base_seed,
        fold=fold.fold_index,
        config_hash=config.config_hash(),
    )
    return RunResult(
        report=report,
        stats=rule_stats(clf, rules),
        n_generated=len(rules),
        classifier=clf,
        rules=rules,
    )


@dataclass
class ExperimentResult:
    reports: list[MetricsReport]
    stats_rows: list[dict]
    failures: list[dict]
    output_dir: str

    @property
    def ok(self) -> bool:
        return not self.failures


def _run_task(args) -> tuple[int, int, RunResult]:
    dataset, fold, base_seed, config, out_dir = args
    run_name = f"seed{base_seed}_fold{fold.fold_index}"
    log_path = Path(out_dir, "logs", f"{run_name}.jsonl") if out_dir else None
    result = single_run(dataset, fold, base_seed, config, log_path=log_path)
    if out_dir:
        save_rules(result.rules, Path(out_dir, "rules", f"{run_name}.rules.tsv"))
        save_classifier(result.classifier, Path(out_dir, "classifiers", f"{run_name}.json"))
        Path(out_dir, "classifiers", f"{run_name}.txt").write_text(
            classifier_text(result.classifier), encoding="utf-8"
        )
    return base_seed, fold.fold_index, result


def run_experiment(config: RunConfig, dataset: Dataset | None = None) -> ExperimentResult:
    """Run seeds x folds, write reports, keep going past per-run failures."""
    if dataset is None:
        dataset = load_dataset(config.dataset_path)
    out_dir = config.output_dir
    if out_dir:
        for sub in ("rules", "classifiers", "logs"):
            Path(out_dir, sub).mkdir(parents=True, exist_ok=True)

    tasks = []
    for base_seed in config.seeds:
        folds = stratified_folds(dataset, config.k_folds, base_seed)
        for fold in folds:
            tasks.append((dataset, fold, base_seed, config, out_dir))

    results: dict[tuple[int, int], RunResult] = {}
    failures: list[dict] = []
    if config.jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=config.jobs) as pool:
            futures = {
                pool.submit(_run_task, task): (task[2], task[1].fold_index) for task in tasks
            }
            for future in concurrent.futures.as_completed(futures):
                seed_fold = futures[future]
                try:
                    seed, fold_index, result = future.result()
                    results[(seed, fold_index)] = result
                except Exception as exc:  # per-run failures must not stop the sweep
                    log.error("run seed=%s fold=%s failed: %s", *seed_fold, exc)
                    failures.append(
                        {"seed": seed_fold[0], "fold": seed_fold[1], "error": str(exc)}
                    )
    else:
        for task in tasks:
            seed_fold = (task[2], task[1].fold_index)
            try:
                seed, fold_index, result = _run_task(task)
                results[(seed, fold_index)] = result
            except Exception as exc:
                log.error("run seed=%s fold=%s failed: %s", *seed_fold, exc)
                failures.append({"seed": seed_fold[0], "fold": seed_fold[1], "error": str(exc)})

    ordered_keys = sorted(results)
    reports = [results[key].report for key in ordered_keys]
    stats_rows = [
        _stats_row(results[key], key[0], key[1]) for key in ordered_keys
    ]
    if out_dir:
        write_metrics_csv(reports, Path(out_dir, "metrics.csv"))
        write_stats_csv(stats_rows, Path(out_dir, "rule_stats.csv"))
        aggregate = build_aggregate(config, dataset, reports, stats_rows, failures)
        with open(Path(out_dir, "aggregate.json"), "w", encoding="utf-8") as fh:
            json.dump(aggregate, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return ExperimentResult(
        reports=reports, stats_rows=stats_rows, failures=failures, output_dir=out_dir
    )


def _stats_row(result: RunResult, seed: int, fold: int) -> dict:
    s = result.stats
    return {
        "seed": seed,
        "fold": fold,
        "classifier_rules": s.classifier_rules,
        "classifier_rules_pos": s.positive.classifier_rules,
        "classifier_rules_neg": s.negative.classifier_rules,
        "generated_rules": s.generated_rules,
        "generated_rules_pos": s.positive.generated_rules,
        "generated_rules_neg": s.negative.generated_rules,
        "mean_length_pos": s.positive.mean_length,
        "mean_length_neg": s.negative.mean_length,
        "biblio_operators_pos": s.positive.biblio_operators,
        "biblio_operators_neg": s.negative.biblio_operators,
    }


_CSV_COLUMNS = (
    "dataset", "seed", "fold", "config_hash",
    "recall", "precision", "specificity", "accuracy", "balanced_accuracy",
)


def write_metrics_csv(reports: Sequence[MetricsReport], path) -> None:
    """One row per run; undefined metrics are empty cells; floats use repr."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_CSV_COLUMNS)
        for r in reports:
            writer.writerow(
                [
                    r.dataset,
                    r.seed,
                    r.fold,
                    r.config_hash,
                    *(("" if v is None else repr(v)) for v in r.values().values()),
                ]
            )


def read_metrics_csv(path) -> list[MetricsReport]:
    reports = []
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            reports.append(
                MetricsReport(
                    dataset=row["dataset"],
                    seed=int(row["seed"]),
                    fold=int(row["fold"]),
                    config_hash=row["config_hash"],
                    **{
                        name: (float(row[name]) if row[name] != "" else None)
                        for name in ("recall", "precision", "specificity", "accuracy", "balanced_accuracy")
                    },
                )
            )
    return reports


def write_stats_csv(rows: Sequence[dict], path) -> None:
    if not rows:
        columns = ["seed", "fold"]
    else:
        columns = list(rows[0])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if v is None else v) for k, v in row.items()})


def build_aggregate(
    config: RunConfig,
    dataset: Dataset,
    reports: Sequence[MetricsReport],
    stats_rows: Sequence[dict],
    failures: Sequence[dict],
) -> dict:
    aggregates = aggregate_metrics(reports)
    number_fields = (
        "classifier_rules", "classifier_rules_pos", "classifier_rules_neg",
        "generated_rules", "generated_rules_pos", "generated_rules_neg",
        "biblio_operators_pos", "biblio_operators_neg",
    )
    stats_summary: dict[str, float | int | None] = {}
    if stats_rows:
        import statistics

        for name in number_fields:
            values = [row[name] for row in stats_rows]
            stats_summary[f"{name}_mean"] = statistics.mean(values)
        stats_summary["generated_rules_total"] = sum(r["generated_rules"] for r in stats_rows)
        stats_summary["biblio_operators_total"] = sum(
            r["biblio_operators_pos"] + r["biblio_operators_neg"] for r in stats_rows
        )
    return {
        "dataset": dataset.name,
        "records": len(dataset),
        "config_hash": config.config_hash(),
        "n_runs": len(reports),
        "n_failures": len(failures),
        "failures": list(failures),
        "seeds": list(config.seeds),
        "k_folds": config.k_folds,
        "strategy": config.strategy,
        "metrics": {
            name: {"mean": agg.mean, "stdev": agg.stdev, "excluded": agg.excluded}
            for name, agg in aggregates.items()
        },
        "rule_stats": stats_summary,
    }
