"""Text features for rule mining: tokenization, TF-IDF, class vocabularies.

The textual side of the rule language works on stemmed tokens. Records and
rule word sets go through the same pipeline (:func:`tokenize_stem`) so that
a word set drawn from a vocabulary always compares against record text in
the same normal form.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Iterable, Mapping, Sequence

from .porter import stem

log = logging.getLogger(__name__)

_TOKEN_RE = re.compile(r"[a-z]+")


def _load_stopwords() -> frozenset[str]:
    text = resources.files("rulesieve.data").joinpath("stopwords.txt").read_text("utf-8")
    return frozenset(w for w in text.split() if w)


STOPWORDS = _load_stopwords()


def tokenize_stem(text: str) -> list[str]:
    """Lowercase, strip punctuation and digits, drop stopwords, stem.

    Tokens are maximal runs of ASCII letters after lowercasing; digits and
    punctuation act as separators. Stopwords are checked on the raw token,
    before stemming.
    """
    out = []
    for token in _TOKEN_RE.findall(text.lower()):
        if token in STOPWORDS:
            continue
        out.append(stem(token))
    return out


@lru_cache(maxsize=None)
def cached_stems(text: str) -> frozenset[str]:
    """Stem set of a text, cached by the text itself.

    Fold subsets share record objects (and therefore strings) with the full
    dataset, so repeated preprocessing across folds is close to free.
    """
    return frozenset(tokenize_stem(text))


def tfidf_scores(documents: Sequence[Sequence[str]]) -> dict[str, float]:
    """Score every term over a corpus of already-stemmed documents.

    score(t) = max over documents d of tf(t, d) * idf(t), with
    tf = raw count / document length and idf = ln(N / df(t)). A term present
    in every document scores 0; empty documents contribute nothing.
    """
    if not documents:
        raise ValueError("tfidf_scores requires at least one document")
    n_docs = len(documents)
    df: dict[str, int] = {}
    max_tf: dict[str, float] = {}
    for doc in documents:
        if not doc:
            continue
        length = len(doc)
        counts: dict[str, int] = {}
        for t in doc:
            counts[t] = counts.get(t, 0) + 1
        for t, c in counts.items():
            df[t] = df.get(t, 0) + 1
            tf = c / length
            if tf > max_tf.get(t, 0.0):
                max_tf[t] = tf
    return {t: max_tf[t] * math.log(n_docs / df[t]) for t in df}


@dataclass(frozen=True)
class Vocabulary:
    """Ranked stems with their scores.

    terms are unique stems sorted by score descending, ties broken by the
    stem itself.
    """

    terms: tuple[tuple[str, float], ...]
    source: str = "user"

    def __post_init__(self) -> None:
        stems = [t for t, _ in self.terms]
        if len(set(stems)) != len(stems):
            raise ValueError("vocabulary stems must be unique")
        ordered = sorted(self.terms, key=lambda p: (-p[1], p[0]))
        object.__setattr__(self, "terms", tuple(ordered))

    @property
    def stems(self) -> tuple[str, ...]:
        return tuple(t for t, _ in self.terms)

    def __len__(self) -> int:
        return len(self.terms)

    def __contains__(self, stem_: str) -> bool:
        return any(t == stem_ for t, _ in self.terms)


def class_vocabulary(dataset, target_label: bool, top_k: int = 100) -> Vocabulary:
    """Top-k TF-IDF stems over title+abstract of records with a given label."""
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    docs = [
        tokenize_stem(rec.title + " " + rec.abstract)
        for rec in dataset.records
        if rec.label == target_label
    ]
    source = "positive" if target_label else "negative"
    if not docs:
        log.warning(
            "no records with label=%s in %r; returning empty %s vocabulary",
            target_label, dataset.name, source,
        )
        return Vocabulary(terms=(), source=source)
    scores = tfidf_scores(docs)
    ranked = sorted(scores.items(), key=lambda p: (-p[1], p[0]))[:top_k]
    return Vocabulary(terms=tuple(ranked), source=source)


def relevant_vocabulary(pos: Vocabulary, neg: Vocabulary) -> Vocabulary:
    """Stems of ``pos`` that do not occur in ``neg``, keeping pos scores."""
    neg_stems = set(neg.stems)
    kept = tuple((t, s) for t, s in pos.terms if t not in neg_stems)
    return Vocabulary(terms=kept, source="relevant")


def load_vocabulary(path) -> Vocabulary:
    """Read a user vocabulary file: one stem per line, '#' comments allowed."""
    stems: list[str] = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            word = line.strip()
            if not word or word.startswith("#"):
                continue
            if word not in seen:
                seen.add(word)
                stems.append(word)
    return Vocabulary(terms=tuple((s, 0.0) for s in stems), source="user")


def save_vocabulary(vocab: Vocabulary, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for term, score in vocab.terms:
            fh.write(f"{term}\t{score!r}\n")
