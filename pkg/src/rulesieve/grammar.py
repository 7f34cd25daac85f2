"""Context-free grammar for the rule language: parsing, derivation, phenotype.

The grammar is read from a BNF text file plus an XML file describing how
value terminals (names ending in "Value") are substituted by concrete
values: integer ranges, categorical choices, or word sets drawn from a
vocabulary. Genotypes are derivation trees; the phenotype mapping turns a
tree into a :class:`rulesieve.rules.Rule`.
"""

from __future__ import annotations

import random
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Iterable, Mapping, Sequence

from .corpus import Dataset
from .rules import Condition, Rule
from .textmine import Vocabulary

INT_RANGE = "int_range"
CATEGORICAL = "categorical"
WORD_SET = "word_set"

# Record fields a production can depend on, mapped to the terminals that
# mention them. titleAbstract needs both title and abstract.
FIELD_TERMINALS = {
    "nCites": ("nCites", "nCitesValue"),
    "nAuthors": ("nAuthors", "nAuthorsValue"),
    "year": ("year", "yearValue"),
    "paperType": ("paperType", "paperTypeValue"),
    "title": ("title", "titleValue"),
    "abstract": ("abstract", "abstractValue"),
}
_TITLE_ABSTRACT_TERMINALS = ("titleAbstract", "titleAbstractValue")

_NUM_CMP = {">": "gt", "<": "lt", ">=": "ge", "<=": "le"}


_NON_TERMINAL_RE = re.compile(r"^<[^<>\s]+>$")


def _looks_non_terminal(symbol: str) -> bool:
    """Angle-bracketed names are non-terminals; bare tokens (including the
    comparator symbols < and <=) are terminals."""
    return bool(_NON_TERMINAL_RE.match(symbol))


class GrammarError(Exception):
    """Raised for malformed grammars or invalid grammar operations."""


class GenerationError(GrammarError):
    """Raised when a derivation cannot be produced."""


@dataclass(frozen=True)
class TerminalConfig:
    """How a value terminal is substituted during derivation.

    int_range draws an integer in [min_value, max_value]; a range left
    unspecified in the XML stays None until bound from observed data.
    categorical draws one of ``categories``. word_set draws between
    word_count[0] and word_count[1] distinct stems from ``words`` (bound
    from a vocabulary before derivation).
    """

    name: str
    value_kind: str
    min_value: int | None = None
    max_value: int | None = None
    categories: tuple[str, ...] = ()
    word_count: tuple[int, int] = (1, 3)
    words: tuple[str, ...] | None = None
    source: str = "relevant"

    def __post_init__(self) -> None:
        if self.value_kind not in (INT_RANGE, CATEGORICAL, WORD_SET):
            raise GrammarError(f"terminal {self.name!r}: unknown kind {self.value_kind!r}")
        if self.value_kind == INT_RANGE:
            if (
                self.min_value is not None
                and self.max_value is not None
                and self.min_value > self.max_value
            ):
                raise GrammarError(f"terminal {self.name!r}: minValue > maxValue")
        if self.value_kind == CATEGORICAL and not self.categories:
            raise GrammarError(f"terminal {self.name!r}: categorical without values")
        if self.value_kind == WORD_SET:
            lo, hi = self.word_count
            if not (1 <= lo <= hi):
                raise GrammarError(f"terminal {self.name!r}: bad word count range {self.word_count}")


@dataclass(frozen=True)
class GrammarSpec:
    """A context-free grammar with terminal value configuration."""

    root: str
    non_terminals: frozenset[str]
    terminals: frozenset[str]
    productions: dict[str, tuple[tuple[str, ...], ...]]
    terminal_configs: dict[str, TerminalConfig]

    def __post_init__(self) -> None:
        overlap = self.non_terminals & self.terminals
        if overlap:
            raise GrammarError(f"symbols both terminal and non-terminal: {sorted(overlap)}")
        if self.root not in self.non_terminals:
            raise GrammarError(f"root {self.root!r} is not a non-terminal")
        for nt, alts in self.productions.items():
            if nt not in self.non_terminals:
                raise GrammarError(f"production for unknown non-terminal {nt!r}")
            for alt in alts:
                for sym in alt:
                    if sym not in self.non_terminals and sym not in self.terminals:
                        raise GrammarError(f"undefined symbol {sym!r} in production of {nt!r}")
        for nt in self.non_terminals:
            if not self.productions.get(nt):
                raise GrammarError(f"non-terminal {nt!r} has no production")
        for t in self.terminals:
            if t.endswith("Value") and t not in self.terminal_configs:
                raise GrammarError(f"value terminal {t!r} has no terminal configuration")
        object.__setattr__(self, "_min_der", _min_derivations(self))
        for nt in self.non_terminals:
            if self._min_der[nt] is None:
                raise GrammarError(f"non-terminal {nt!r} cannot derive a finite string")

    def is_terminal(self, symbol: str) -> bool:
        return symbol in self.terminals

    def min_derivations(self, symbol: str) -> int:
        """Fewest production applications needed to fully derive a symbol."""
        value = self._min_der.get(symbol)
        if value is None:
            raise GrammarError(f"unknown symbol {symbol!r}")
        return value

    def bind(
        self,
        vocabulary: Vocabulary | Sequence[str] | None = None,
        numeric_ranges: Mapping[str, tuple[int, int]] | None = None,
    ) -> "GrammarSpec":
        """Spec with word-set pools and open integer ranges filled in.

        Explicit ranges from the configuration are kept; only ranges left
        open get values from ``numeric_ranges`` (keyed by terminal name).
        """
        stems: tuple[str, ...] | None = None
        if vocabulary is not None:
            stems = tuple(vocabulary.stems) if isinstance(vocabulary, Vocabulary) else tuple(vocabulary)
        configs = dict(self.terminal_configs)
        for name, cfg in self.terminal_configs.items():
            if cfg.value_kind == WORD_SET and stems is not None:
                configs[name] = replace(cfg, words=stems)
            elif cfg.value_kind == INT_RANGE and numeric_ranges and name in numeric_ranges:
                lo, hi = numeric_ranges[name]
                configs[name] = replace(
                    cfg,
                    min_value=cfg.min_value if cfg.min_value is not None else int(lo),
                    max_value=cfg.max_value if cfg.max_value is not None else int(hi),
                )
        return replace(self, terminal_configs=configs)


def _min_derivations(spec: GrammarSpec) -> dict[str, int | None]:
    mins: dict[str, int | None] = {t: 0 for t in spec.terminals}
    for nt in spec.non_terminals:
        mins[nt] = None
    changed = True
    while changed:
        changed = False
        for nt, alts in spec.productions.items():
            best = mins[nt]
            for alt in alts:
                parts = [mins[s] for s in alt]
                if any(p is None for p in parts):
                    continue
                cost = 1 + sum(parts)
                if best is None or cost < best:
                    best = cost
            if best != mins[nt]:
                mins[nt] = best
                changed = True
    return mins


# ---------------------------------------------------------------------------
# Parsing


def parse_grammar(grammar_text: str, terminal_config_text: str = "") -> GrammarSpec:
    """Build a grammar from BNF text and the terminal-configuration XML.

    BNF lines look like ``<sym> ::= alt | alt``; tokens are whitespace
    separated, ``<...>`` names non-terminals and anything else is a
    terminal. Lines starting with ``|`` continue the previous production,
    ``#`` starts a comment, and ``%terminals: a b`` declares terminals that
    no production references. The first production's left side is the root.
    """
    productions: dict[str, list[tuple[str, ...]]] = {}
    extra_terminals: set[str] = set()
    root: str | None = None
    current: str | None = None
    for line_no, raw in enumerate(grammar_text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("%terminals:"):
            extra_terminals.update(line[len("%terminals:") :].split())
            continue
        if line.startswith("|"):
            if current is None:
                raise GrammarError(f"line {line_no}: continuation with no open production")
            rhs = line[1:]
            lhs = current
        elif "::=" in line:
            lhs_text, rhs = line.split("::=", 1)
            lhs = lhs_text.strip()
            if not _looks_non_terminal(lhs):
                raise GrammarError(f"line {line_no}: left side {lhs!r} is not a <non-terminal>")
            current = lhs
            if root is None:
                root = lhs
        else:
            raise GrammarError(f"line {line_no}: expected '::=' in {line!r}")
        for alt_text in rhs.split("|"):
            tokens = tuple(alt_text.split())
            if not tokens:
                raise GrammarError(f"line {line_no}: empty alternative for {lhs}")
            productions.setdefault(lhs, []).append(tokens)
    if root is None:
        raise GrammarError("grammar has no productions")
    non_terminals = frozenset(productions)
    referenced = {s for alts in productions.values() for alt in alts for s in alt}
    for sym in referenced:
        if _looks_non_terminal(sym) and sym not in non_terminals:
            raise GrammarError(f"undefined symbol {sym!r} on a right-hand side")
    terminals = frozenset(s for s in referenced if s not in non_terminals) | frozenset(extra_terminals)
    configs = parse_terminal_configs(terminal_config_text) if terminal_config_text.strip() else {}
    return GrammarSpec(
        root=root,
        non_terminals=non_terminals,
        terminals=terminals,
        productions={nt: tuple(alts) for nt, alts in productions.items()},
        terminal_configs=configs,
    )


def parse_terminal_configs(xml_text: str) -> dict[str, TerminalConfig]:
    """Parse the terminal-configuration XML.

    Each ``<terminal>`` element carries name/code/type attributes; type
    ``int`` takes optional minValue/maxValue, ``categorical`` takes a
    comma-separated ``values`` list, and ``words`` takes minWords/maxWords
    plus a vocabulary ``source``.
    """
    try:
        tree = ET.fromstring(xml_text)
    except ET.ParseError as exc:
        raise GrammarError(f"terminal configuration XML: {exc}")
    configs: dict[str, TerminalConfig] = {}
    elements = [tree] if tree.tag == "terminal" else list(tree.iter("terminal"))
    for el in elements:
        name = el.get("name")
        if not name:
            raise GrammarError("terminal element without a name attribute")
        kind = el.get("type", "int")
        if kind == "int":
            min_v = el.get("minValue")
            max_v = el.get("maxValue")
            configs[name] = TerminalConfig(
                name=name,
                value_kind=INT_RANGE,
                min_value=int(min_v) if min_v is not None else None,
                max_value=int(max_v) if max_v is not None else None,
            )
        elif kind == "categorical":
            values = tuple(v.strip() for v in el.get("values", "").split(",") if v.strip())
            configs[name] = TerminalConfig(name=name, value_kind=CATEGORICAL, categories=values)
        elif kind == "words":
            configs[name] = TerminalConfig(
                name=name,
                value_kind=WORD_SET,
                word_count=(int(el.get("minWords", 1)), int(el.get("maxWords", 3))),
                source=el.get("source", "relevant"),
            )
        else:
            raise GrammarError(f"terminal {name!r}: unknown type {kind!r}")
    return configs


def default_grammar() -> GrammarSpec:
    """The bundled rule-language grammar with its terminal configuration."""
    data = resources.files("rulesieve.data")
    return parse_grammar(
        data.joinpath("grammar.bnf").read_text("utf-8"),
        data.joinpath("terminals.xml").read_text("utf-8"),
    )


# ---------------------------------------------------------------------------
# Pruning


def prune_grammar(spec: GrammarSpec, available_fields: Iterable[str]) -> GrammarSpec:
    """Remove productions that test fields the data cannot provide.

    Alternatives mentioning a terminal of an unavailable field are dropped;
    non-terminals left without alternatives disappear, transitively, as do
    symbols no longer reachable from the root.
    """
    available = set(available_fields)
    unknown = available - set(FIELD_TERMINALS)
    if unknown:
        raise GrammarError(f"unknown fields: {sorted(unknown)}")
    banned: set[str] = set()
    for fname, terms in FIELD_TERMINALS.items():
        if fname not in available:
            banned.update(terms)
    if not {"title", "abstract"} <= available:
        banned.update(_TITLE_ABSTRACT_TERMINALS)

    productions = {nt: list(alts) for nt, alts in spec.productions.items()}
    removed = set(banned)
    changed = True
    while changed:
        changed = False
        for nt in list(productions):
            kept = [alt for alt in productions[nt] if not (set(alt) & removed)]
            if kept != productions[nt]:
                productions[nt] = kept
                changed = True
            if not kept:
                del productions[nt]
                removed.add(nt)
                changed = True
    if spec.root not in productions:
        raise GrammarError("pruning left the root symbol underivable")

    # drop non-terminals unreachable from the root
    reachable: set[str] = set()
    stack = [spec.root]
    while stack:
        sym = stack.pop()
        if sym in reachable or sym not in productions:
            continue
        reachable.add(sym)
        for alt in productions[sym]:
            stack.extend(alt)
    productions = {nt: tuple(alts) for nt, alts in productions.items() if nt in reachable}

    referenced = {s for alts in productions.values() for alt in alts for s in alt}
    never_referenced = spec.terminals - {
        s for alts in spec.productions.values() for alt in alts for s in alt
    }
    terminals = frozenset((referenced - set(productions)) | (never_referenced - banned))
    return GrammarSpec(
        root=spec.root,
        non_terminals=frozenset(productions),
        terminals=terminals,
        productions=productions,
        terminal_configs={n: c for n, c in spec.terminal_configs.items() if n in terminals},
    )


def numeric_ranges_from_dataset(dataset: Dataset) -> dict[str, tuple[int, int]]:
    """Observed [min, max] per numeric field, keyed by value-terminal name."""
    ranges: dict[str, tuple[int, int]] = {}
    for fname, terminal in (("nCites", "nCitesValue"), ("nAuthors", "nAuthorsValue"), ("year", "yearValue")):
        values = [r.get_field(fname) for r in dataset.records]
        values = [v for v in values if v is not None]
        if values:
            ranges[terminal] = (min(values), max(values))
    return ranges


# ---------------------------------------------------------------------------
# Derivation trees


@dataclass(frozen=True)
class DerivationTree:
    """Node of a derivation tree; leaves are terminals.

    Value terminals carry the concrete drawn value: an int, a category
    string, or a sorted tuple of stems.
    """

    symbol: str
    children: tuple["DerivationTree", ...] = ()
    value: object = None

    @property
    def derivation_count(self) -> int:
        """Production applications in this tree (= internal node count)."""
        if not self.children:
            return 0
        return 1 + sum(c.derivation_count for c in self.children)

    def leaves(self) -> list["DerivationTree"]:
        """Leaves in preorder."""
        if not self.children:
            return [self]
        out: list[DerivationTree] = []
        for c in self.children:
            out.extend(c.leaves())
        return out

    def __str__(self) -> str:
        parts = []
        for leaf in self.leaves():
            parts.append(str(leaf.value) if leaf.value is not None else leaf.symbol)
        return " ".join(parts)


def _draw_value(cfg: TerminalConfig, rng: random.Random):
    if cfg.value_kind == INT_RANGE:
        if cfg.min_value is None or cfg.max_value is None:
            raise GenerationError(
                f"terminal {cfg.name!r} has an unbound range; bind() the grammar first"
            )
        return rng.randint(cfg.min_value, cfg.max_value)
    if cfg.value_kind == CATEGORICAL:
        return cfg.categories[rng.randrange(len(cfg.categories))]
    pool = cfg.words
    if pool is None:
        raise GenerationError(
            f"terminal {cfg.name!r} has no bound vocabulary; bind() the grammar first"
        )
    if not pool:
        raise GenerationError(f"terminal {cfg.name!r}: bound vocabulary is empty")
    hi = min(cfg.word_count[1], len(pool))
    lo = min(cfg.word_count[0], hi)
    k = rng.randint(lo, hi)
    return tuple(sorted(rng.sample(pool, k)))


def draw_terminal_value(spec: GrammarSpec, symbol: str, rng: random.Random):
    """Draw a fresh concrete value for a value terminal."""
    cfg = spec.terminal_configs.get(symbol)
    if cfg is None:
        raise GrammarError(f"{symbol!r} is not a value terminal")
    return _draw_value(cfg, rng)


def random_derive(
    spec: GrammarSpec, start: str, max_derivations: int, rng: random.Random
) -> DerivationTree:
    """Randomly derive a complete tree from ``start``.

    Expansion is leftmost-first. At every step the choice among production
    alternatives is uniform over those that still allow the whole tree to
    finish within ``max_derivations`` applications; alternatives whose
    cheapest completion would overrun the budget are ineligible.
    """
    if start not in spec.non_terminals:
        raise GrammarError(f"start symbol {start!r} is not a non-terminal")
    need = spec.min_derivations(start)
    if max_derivations < need:
        raise GenerationError(
            f"max_derivations={max_derivations} below the minimal derivation "
            f"size {need} of {start}"
        )
    state = {"remaining": max_derivations, "pending": need}

    def expand(symbol: str) -> DerivationTree:
        state["pending"] -= spec.min_derivations(symbol)
        if spec.is_terminal(symbol):
            cfg = spec.terminal_configs.get(symbol)
            value = _draw_value(cfg, rng) if cfg is not None else None
            return DerivationTree(symbol=symbol, value=value)
        alts = spec.productions[symbol]
        eligible = [
            alt
            for alt in alts
            if 1 + sum(spec.min_derivations(s) for s in alt) + state["pending"]
            <= state["remaining"]
        ]
        alt = eligible[rng.randrange(len(eligible))]
        state["remaining"] -= 1
        state["pending"] += sum(spec.min_derivations(s) for s in alt)
        return DerivationTree(symbol=symbol, children=tuple(expand(s) for s in alt))

    return expand(start)


def validate_tree(
    spec: GrammarSpec, tree: DerivationTree, max_derivations: int | None = None
) -> None:
    """Check that a tree is derivable from the grammar; raise if not."""
    if max_derivations is not None and tree.derivation_count > max_derivations:
        raise GrammarError(
            f"tree uses {tree.derivation_count} derivations, allowed {max_derivations}"
        )

    def check(node: DerivationTree) -> None:
        if not node.children:
            if node.symbol not in spec.terminals:
                raise GrammarError(f"leaf {node.symbol!r} is not a terminal")
            cfg = spec.terminal_configs.get(node.symbol)
            if cfg is not None:
                _check_value(cfg, node.value)
            return
        if node.symbol not in spec.non_terminals:
            raise GrammarError(f"internal node {node.symbol!r} is not a non-terminal")
        shape = tuple(c.symbol for c in node.children)
        if shape not in spec.productions[node.symbol]:
            raise GrammarError(f"{node.symbol} -> {' '.join(shape)} is not a production")
        for child in node.children:
            check(child)

    check(tree)


def _check_value(cfg: TerminalConfig, value) -> None:
    if cfg.value_kind == INT_RANGE:
        if not isinstance(value, int) or isinstance(value, bool):
            raise GrammarError(f"{cfg.name}: expected an int value, got {value!r}")
        if cfg.min_value is not None and value < cfg.min_value:
            raise GrammarError(f"{cfg.name}: value {value} below {cfg.min_value}")
        if cfg.max_value is not None and value > cfg.max_value:
            raise GrammarError(f"{cfg.name}: value {value} above {cfg.max_value}")
    elif cfg.value_kind == CATEGORICAL:
        if value not in cfg.categories:
            raise GrammarError(f"{cfg.name}: {value!r} not in {cfg.categories}")
    else:
        if not isinstance(value, tuple) or not value:
            raise GrammarError(f"{cfg.name}: expected a non-empty stem tuple, got {value!r}")
        if len(value) > cfg.word_count[1]:
            raise GrammarError(f"{cfg.name}: {len(value)} stems exceeds {cfg.word_count[1]}")


# ---------------------------------------------------------------------------
# Phenotype


def phenotype(tree: DerivationTree) -> Rule:
    """Rule represented by a derivation tree (leaves read in preorder).

    The consequent is normalized to a predicted class: notEquals of a
    boolean flips it. A negation in front of a two-comparison conjunction
    applies to each comparison, keeping the rule a flat conjunction.
    """
    children = {c.symbol: c for c in tree.children}
    if tree.symbol != "<rule>" or set(children) != {"<antc>", "<consq>"}:
        raise GrammarError(f"phenotype expects a <rule> tree, got {tree.symbol!r}")
    conditions = tuple(_walk_antecedent(children["<antc>"]))
    predicted = _walk_consequent(children["<consq>"])
    return Rule(conditions=conditions, predicted_class=predicted)


def _walk_antecedent(node: DerivationTree):
    shape = [c.symbol for c in node.children]
    if shape == ["<cmp>"]:
        yield from _walk_cmp(node.children[0], negated=False)
    elif shape == ["not", "<cmp>"]:
        yield from _walk_cmp(node.children[1], negated=True)
    elif shape == ["and", "<cmp>", "<antc>"]:
        yield from _walk_cmp(node.children[1], negated=False)
        yield from _walk_antecedent(node.children[2])
    else:
        raise GrammarError(f"unexpected antecedent shape {shape}")


def _walk_cmp(node: DerivationTree, negated: bool):
    shape = [c.symbol for c in node.children]
    if shape == ["and", "<numCmp>", "<textCmp>"]:
        yield _comparison(node.children[1], negated)
        yield _comparison(node.children[2], negated)
    elif shape == ["<textCmp>"]:
        yield _comparison(node.children[0], negated)
    else:
        raise GrammarError(f"unexpected comparison shape {shape}")


def _comparison(node: DerivationTree, negated: bool) -> Condition:
    cmp_node, field_leaf, value_leaf = node.children
    comparator_leaf = cmp_node.children[0].symbol
    fname = field_leaf.symbol
    if node.symbol == "<numCmp>":
        return Condition(
            field=fname,
            comparator=_NUM_CMP[comparator_leaf],
            value=value_leaf.value,
            negated=negated,
        )
    if fname == "paperType":
        # containsAll/containsAny over the single drawn category is equality
        return Condition(field=fname, comparator="equals", value=value_leaf.value, negated=negated)
    return Condition(field=fname, comparator=comparator_leaf, value=value_leaf.value, negated=negated)


def _walk_consequent(node: DerivationTree) -> bool:
    cat_node, _is_candidate, value_leaf = node.children
    comparator = cat_node.children[0].symbol
    value = str(value_leaf.value).lower() == "true"
    return value if comparator == "equals" else not value
