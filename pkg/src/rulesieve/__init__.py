"""rulesieve: evolutionary mining of interpretable screening rules.

A grammar-guided genetic programming engine that evolves class association
rules over textual and bibliometric features of papers, then assembles an
ordered rule-based classifier deciding which papers from a literature
search are relevant.
"""

from .corpus import (
    Dataset,
    FoldSplit,
    PaperRecord,
    class_counts,
    load_dataset,
    save_dataset,
    stratified_folds,
)
from .grammar import (
    DerivationTree,
    GrammarSpec,
    TerminalConfig,
    default_grammar,
    parse_grammar,
    phenotype,
    prune_grammar,
    random_derive,
    validate_tree,
)
from .rules import Condition, Rule, confidence, fitness, matches_antecedent, parse_rule, render, support
from .textmine import Vocabulary, class_vocabulary, relevant_vocabulary, tfidf_scores, tokenize_stem

__version__ = "0.1.0"

__all__ = [
    "Condition",
    "Dataset",
    "DerivationTree",
    "FoldSplit",
    "GrammarSpec",
    "PaperRecord",
    "Rule",
    "TerminalConfig",
    "Vocabulary",
    "class_counts",
    "class_vocabulary",
    "confidence",
    "default_grammar",
    "fitness",
    "load_dataset",
    "matches_antecedent",
    "parse_grammar",
    "parse_rule",
    "phenotype",
    "prune_grammar",
    "random_derive",
    "relevant_vocabulary",
    "render",
    "save_dataset",
    "stratified_folds",
    "support",
    "tfidf_scores",
    "tokenize_stem",
    "validate_tree",
]
