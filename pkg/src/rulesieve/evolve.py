"""The evolutionary search loop for rule mining.

Populations of derivation trees are evolved by binary tournament selection,
subtree crossover, grammar-based mutation and one of three replacement
strategies. Every evaluated individual whose fitness reaches a threshold is
kept in an archive of best rules, deduplicated by rendered phenotype; the
archive is what the search returns.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass
from typing import Iterable, Sequence

from .corpus import Dataset
from .grammar import (
    DerivationTree,
    GrammarSpec,
    draw_terminal_value,
    numeric_ranges_from_dataset,
    random_derive,
)
from .grammar import phenotype as tree_phenotype
from .rules import Rule, evaluate, render
from .textmine import Vocabulary

log = logging.getLogger(__name__)

REPLACEMENT_STRATEGIES = ("NPOP", "ELIT", "PGEN")


@dataclass(frozen=True)
class EvolveConfig:
    """Parameters of the evolutionary search."""

    max_generations: int = 100
    population_size: int = 100
    crossover_prob: float = 0.9
    mutation_prob: float = 0.1
    max_derivations: int = 15
    replacement: str = "NPOP"
    archive_threshold: float = 0.2
    seed: int = 1

    def __post_init__(self) -> None:
        if self.max_generations < 1 or self.population_size < 1 or self.max_derivations < 1:
            raise ValueError("max_generations, population_size and max_derivations must be >= 1")
        for name in ("crossover_prob", "mutation_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {p}")
        if self.replacement not in REPLACEMENT_STRATEGIES:
            raise ValueError(f"replacement must be one of {REPLACEMENT_STRATEGIES}")
        # archive_threshold is deliberately unrestricted: values above 1
        # configure an unattainable bar (empty archive).


class Individual:
    """A derivation tree with its phenotype and (lazily set) fitness."""

    __slots__ = ("genotype", "rule", "rendered", "fitness")

    def __init__(self, genotype: DerivationTree):
        self.genotype = genotype
        self.rule: Rule = tree_phenotype(genotype)
        self.rendered: str = render(self.rule)
        self.fitness: float | None = None

    def sort_key(self):
        """Better-first ordering: fitness, then fewer conditions, then text."""
        return (-self.fitness, len(self.rule), self.rendered)

    def __repr__(self) -> str:
        return f"Individual({self.rendered!r}, fitness={self.fitness})"


def init_population(spec: GrammarSpec, config: EvolveConfig, rng: random.Random) -> list[Individual]:
    """population_size fresh individuals derived from the grammar root."""
    return [
        Individual(random_derive(spec, spec.root, config.max_derivations, rng))
        for _ in range(config.population_size)
    ]


def tournament_select(population: Sequence[Individual], rng: random.Random) -> Individual:
    """Binary tournament: draw two with replacement, keep the better one."""
    a = population[rng.randrange(len(population))]
    b = population[rng.randrange(len(population))]
    return a if a.sort_key() <= b.sort_key() else b


# -- tree surgery -----------------------------------------------------------


def _internal_paths(tree: DerivationTree, symbol: str | None = None) -> list[tuple[int, ...]]:
    """Preorder paths of internal nodes, optionally only those of a symbol."""
    out: list[tuple[int, ...]] = []

    def walk(node: DerivationTree, path: tuple[int, ...]) -> None:
        if node.children:
            if symbol is None or node.symbol == symbol:
                out.append(path)
            for i, child in enumerate(node.children):
                walk(child, path + (i,))

    walk(tree, ())
    return out


def _node_at(tree: DerivationTree, path: tuple[int, ...]) -> DerivationTree:
    node = tree
    for i in path:
        node = node.children[i]
    return node


def _replace_at(tree: DerivationTree, path: tuple[int, ...], new: DerivationTree) -> DerivationTree:
    if not path:
        return new
    i = path[0]
    children = tuple(
        _replace_at(c, path[1:], new) if j == i else c for j, c in enumerate(tree.children)
    )
    return DerivationTree(symbol=tree.symbol, children=children, value=tree.value)


def _swap_subtrees(
    ga: DerivationTree, gb: DerivationTree, path_a: tuple[int, ...], path_b: tuple[int, ...]
) -> tuple[DerivationTree, DerivationTree]:
    sub_a = _node_at(ga, path_a)
    sub_b = _node_at(gb, path_b)
    return _replace_at(ga, path_a, sub_b), _replace_at(gb, path_b, sub_a)


def crossover(
    a: Individual,
    b: Individual,
    rng: random.Random,
    max_derivations: int = 15,
    max_retries: int = 5,
) -> tuple[Individual, Individual]:
    """Swap subtrees rooted at a shared non-terminal.

    The shared symbol and one occurrence of it in each parent are chosen
    uniformly. Offspring exceeding the derivation budget are rejected and
    the operation retried a bounded number of times, after which the
    parents are returned unchanged.
    """
    symbols_a = {n.symbol for n in _walk_internal(a.genotype)}
    symbols_b = {n.symbol for n in _walk_internal(b.genotype)}
    shared = sorted(symbols_a & symbols_b)
    if not shared:
        return a, b
    for _ in range(max_retries):
        symbol = shared[rng.randrange(len(shared))]
        paths_a = _internal_paths(a.genotype, symbol)
        paths_b = _internal_paths(b.genotype, symbol)
        path_a = paths_a[rng.randrange(len(paths_a))]
        path_b = paths_b[rng.randrange(len(paths_b))]
        ga, gb = _swap_subtrees(a.genotype, b.genotype, path_a, path_b)
        if ga.derivation_count <= max_derivations and gb.derivation_count <= max_derivations:
            return Individual(ga), Individual(gb)
    return a, b


def _walk_internal(tree: DerivationTree):
    if tree.children:
        yield tree
        for c in tree.children:
            yield from _walk_internal(c)


def mutate(
    ind: Individual, spec: GrammarSpec, config: EvolveConfig, rng: random.Random
) -> Individual:
    """Re-derive one random subtree, or redraw one value terminal.

    The mutation point is chosen uniformly among non-terminal nodes and
    value-terminal leaves (fixed structural terminals have nothing to
    redraw). Subtree re-derivation happens within the derivation budget
    left by the rest of the tree.
    """
    candidates: list[tuple[tuple[int, ...], DerivationTree]] = []

    def walk(node: DerivationTree, path: tuple[int, ...]) -> None:
        if node.children:
            candidates.append((path, node))
            for i, child in enumerate(node.children):
                walk(child, path + (i,))
        elif node.symbol in spec.terminal_configs:
            candidates.append((path, node))

    walk(ind.genotype, ())
    path, node = candidates[rng.randrange(len(candidates))]
    if node.children:
        budget = config.max_derivations - (ind.genotype.derivation_count - node.derivation_count)
        sub = random_derive(spec, node.symbol, budget, rng)
    else:
        sub = DerivationTree(symbol=node.symbol, value=draw_terminal_value(spec, node.symbol, rng))
    return Individual(_replace_at(ind.genotype, path, sub))


def replace(
    current: Sequence[Individual],
    offspring: Sequence[Individual],
    strategy: str,
    rng: random.Random,
    population_size: int | None = None,
) -> list[Individual]:
    """Build the next population from parents and offspring.

    NPOP draws a uniform sample without replacement from both pools, ELIT
    keeps the best by fitness, PGEN keeps the offspring verbatim.
    """
    size = population_size if population_size is not None else len(current)
    if strategy == "PGEN":
        return list(offspring)
    pool = list(current) + list(offspring)
    if strategy == "NPOP":
        return rng.sample(pool, size)
    if strategy == "ELIT":
        return sorted(pool, key=Individual.sort_key)[:size]
    raise ValueError(f"unknown replacement strategy {strategy!r}")


class Archive:
    """Best rules found so far, deduplicated by rendered phenotype."""

    def __init__(self, threshold: float):
        self.threshold = threshold
        self._members: dict[str, Individual] = {}

    def offer(self, individuals: Iterable[Individual]) -> None:
        for ind in individuals:
            if ind.fitness is None:
                raise ValueError("cannot archive an unevaluated individual")
            if ind.fitness >= self.threshold and ind.rendered not in self._members:
                self._members[ind.rendered] = ind

    def __len__(self) -> int:
        return len(self._members)

    @property
    def best_fitness(self) -> float | None:
        if not self._members:
            return None
        return max(ind.fitness for ind in self._members.values())

    def members(self) -> list[Individual]:
        return sorted(self._members.values(), key=Individual.sort_key)


def _evaluate_population(
    individuals: Sequence[Individual], dataset: Dataset, memo: dict[str, object]
) -> None:
    """Set fitness on every individual, memoized by rendered phenotype."""
    for ind in individuals:
        if ind.fitness is not None:
            continue
        measures = memo.get(ind.rendered)
        if measures is None:
            measures = evaluate(ind.rule, dataset)
            memo[ind.rendered] = measures
        else:
            ind.rule.measures = measures
        ind.fitness = measures.fitness


def run_evolution(
    dataset_train: Dataset,
    spec: GrammarSpec,
    vocabulary: Vocabulary | Sequence[str] | None,
    config: EvolveConfig,
    log_path=None,
) -> list[Rule]:
    """Evolve rules against a training dataset and return the archive.

    The grammar is bound to the vocabulary and to observed numeric ranges
    of the training data before derivation. Per-generation progress can be
    written as JSON lines to ``log_path``. The returned rules carry their
    measures on the training data, best fitness first.
    """
    bound = spec.bind(
        vocabulary=vocabulary, numeric_ranges=numeric_ranges_from_dataset(dataset_train)
    )
    rng = random.Random(config.seed)
    memo: dict[str, object] = {}
    archive = Archive(config.archive_threshold)

    population = init_population(bound, config, rng)
    _evaluate_population(population, dataset_train, memo)
    archive.offer(population)

    log_file = open(log_path, "w", encoding="utf-8") if log_path is not None else None
    try:
        _log_generation(log_file, 0, population, archive)
        for generation in range(1, config.max_generations + 1):
            offspring: list[Individual] = []
            while len(offspring) < config.population_size:
                parent_a = tournament_select(population, rng)
                parent_b = tournament_select(population, rng)
                if rng.random() < config.crossover_prob:
                    child_a, child_b = crossover(
                        parent_a, parent_b, rng, config.max_derivations
                    )
                else:
                    child_a, child_b = parent_a, parent_b
                for child in (child_a, child_b):
                    if rng.random() < config.mutation_prob:
                        child = mutate(child, bound, config, rng)
                    offspring.append(child)
            del offspring[config.population_size :]
            _evaluate_population(offspring, dataset_train, memo)
            archive.offer(population)
            archive.offer(offspring)
            population = replace(population, offspring, config.replacement, rng)
            _log_generation(log_file, generation, population, archive)
    finally:
        if log_file is not None:
            log_file.close()

    if not archive:
        log.warning(
            "archive is empty after %d generations (threshold %.3f); "
            "classifier construction will fail",
            config.max_generations,
            config.archive_threshold,
        )
    return [ind.rule for ind in archive.members()]


def _log_generation(log_file, generation: int, population, archive: Archive) -> None:
    if log_file is None:
        return
    fits = [ind.fitness for ind in population]
    entry = {
        "generation": generation,
        "best_fitness": max(fits),
        "mean_fitness": sum(fits) / len(fits),
        "archive_size": len(archive),
        "archive_best": archive.best_fitness,
    }
    json.dump(entry, log_file)
    log_file.write("\n")
