"""scikit-learn style wrappers around the annotation and KG-building stages.

Both follow the usual estimator contract: hyper-parameters are plain
``__init__`` arguments (so ``get_params``/``set_params``/``clone`` work),
learned state carries a trailing underscore, and ``fit`` returns ``self``.
"""
from __future__ import annotations

import io
import os
from numbers import Integral
from typing import Iterable

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .annotate import Mention, gazetteer_annotate
from .corpus import Document, Sentence, document_sentences
from .kg import (
    DEFAULT_STATS_MIN_REFS,
    KnowledgeGraph,
    aggregate,
    apply_min_ref,
    emit_html,
    emit_rdf_star,
    emit_turtle,
    stats,
)
from .ontology import (
    ENTITY_ROOT,
    ROLE_ROOT,
    Ontology,
    TermKind,
    build_lexicon,
    classify,
    parse_obo,
)
from .validate import Verdict, VerdictRecord


def check_positive_int(value, name: str, minimum: int = 1) -> int:
    if isinstance(value, bool) or not isinstance(value, Integral):
        raise TypeError(f"{name} must be an integer, got {type(value).__name__}")
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_kinds(kinds) -> tuple[TermKind, ...]:
    if isinstance(kinds, (str, TermKind)):
        kinds = [kinds]
    out = tuple(sorted({TermKind(k) for k in kinds}, key=lambda k: k.value))
    bad = [k for k in out if k not in (TermKind.CHEMICAL, TermKind.ROLE)]
    if not out or bad:
        raise ValueError(f"kinds must be a non-empty subset of chemical/role, got {kinds!r}")
    return out


def check_ontology(X, role_root: str = ROLE_ROOT, entity_root: str = ENTITY_ROOT) -> Ontology:
    """Accept an Ontology, a path to an OBO file, or OBO text."""
    if isinstance(X, Ontology):
        return X
    if isinstance(X, os.PathLike) or (isinstance(X, str) and "\n" not in X and os.path.exists(X)):
        with open(X, encoding="utf-8") as fh:
            return parse_obo(fh, role_root, entity_root)
    if isinstance(X, str):
        return parse_obo(io.StringIO(X), role_root, entity_root)
    raise TypeError(f"expected Ontology, OBO path or OBO text, got {type(X).__name__}")


def check_sentences(X) -> list[Sentence]:
    if isinstance(X, (Sentence, Document)):
        X = [X]
    out = []
    for item in X:
        if isinstance(item, Document):
            out.extend(document_sentences(item))
        elif isinstance(item, Sentence):
            out.append(item)
        else:
            raise TypeError(f"expected Sentence or Document, got {type(item).__name__}")
    return out


def check_records(X) -> list[VerdictRecord]:
    records = list(X)
    for r in records:
        if not isinstance(r, VerdictRecord):
            raise TypeError(f"expected VerdictRecord, got {type(r).__name__}")
    return records


class GazetteerAnnotator(TransformerMixin, BaseEstimator):
    """Lexical chemical/role tagger fitted on an ontology.

    Parameters
    ----------
    kinds : sequence of {"chemical", "role"}, default=("role",)
        Term kinds whose labels and synonyms become lexicon keys.
    min_length : int, default=4
        Shortest surface form kept; shorter strings are too often homonyms.
    role_root, entity_root : str
        Root term ids of the role and chemical-entity branches.

    Attributes
    ----------
    ontology_ : Ontology
    kinds_ : dict of term id -> TermKind
    lexicon_ : Lexicon
    """

    def __init__(self, kinds=("role",), min_length=4, role_root=ROLE_ROOT, entity_root=ENTITY_ROOT):
        self.kinds = kinds
        self.min_length = min_length
        self.role_root = role_root
        self.entity_root = entity_root

    def fit(self, X, y=None):
        kinds = check_kinds(self.kinds)
        min_length = check_positive_int(self.min_length, "min_length")
        self.ontology_ = check_ontology(X, self.role_root, self.entity_root)
        self.kinds_ = classify(self.ontology_)
        self.lexicon_ = build_lexicon(self.ontology_, self.kinds_, kinds, min_length)
        return self

    def transform(self, X) -> list[list[Mention]]:
        """One list of mentions per input sentence (documents are expanded)."""
        check_is_fitted(self, "lexicon_")
        return [gazetteer_annotate(s, self.lexicon_) for s in check_sentences(X)]


class KnowledgeGraphBuilder(BaseEstimator):
    """Aggregate confirmed verdicts into a thresholded chemical/role graph.

    Parameters
    ----------
    ontology : Ontology, path or OBO text
        Source of ChEBI labels and synonyms for grounding.
    min_ref : int, default=2
        Minimum number of supporting text locations per relation.
    min_length : int, default=2
        Shortest surface form that is grounded at all.
    jobs : int, default=1
        Workers for partial aggregation; never changes the result.
    """

    def __init__(self, ontology=None, min_ref=2, min_length=2, jobs=1):
        self.ontology = ontology
        self.min_ref = min_ref
        self.min_length = min_length
        self.jobs = jobs

    def fit(self, X, y=None):
        min_length = check_positive_int(self.min_length, "min_length")
        check_positive_int(self.min_ref, "min_ref")
        jobs = check_positive_int(self.jobs, "jobs")
        onto = check_ontology(self.ontology if self.ontology is not None else "")
        kinds = classify(onto)
        self.chemical_lexicon_ = build_lexicon(onto, kinds, [TermKind.CHEMICAL], min_length)
        self.role_lexicon_ = build_lexicon(onto, kinds, [TermKind.ROLE], min_length)
        records = [r for r in check_records(X) if r.verdict == Verdict.CONFIRMED]
        self.relations_ = aggregate(records, self.chemical_lexicon_, self.role_lexicon_, min_length, jobs)
        self.graph_ = apply_min_ref(self.relations_, self.min_ref)
        return self

    def transform(self, X=None) -> KnowledgeGraph:
        check_is_fitted(self, "graph_")
        return self.graph_

    def to_turtle(self) -> str:
        return emit_turtle(self.transform())

    def to_rdf_star(self) -> str:
        return emit_rdf_star(self.transform())

    def to_html(self) -> str:
        return emit_html(self.transform())

    def stats(self, min_refs: Iterable[int] = DEFAULT_STATS_MIN_REFS):
        check_is_fitted(self, "relations_")
        return stats(self.relations_, list(min_refs))
