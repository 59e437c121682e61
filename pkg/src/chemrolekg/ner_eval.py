"""Strict-span NER scoring and misclassification tables."""
from __future__ import annotations

from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Sequence

from .annotate import Mention
from .ontology import TermKind

KINDS = (TermKind.CHEMICAL, TermKind.ROLE)


class MixedDocuments(ValueError):
    pass


@dataclass(frozen=True)
class Counts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def precision(self) -> float:
        d = self.tp + self.fp
        return self.tp / d if d else 0.0

    @property
    def recall(self) -> float:
        d = self.tp + self.fn
        return self.tp / d if d else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0

    def __add__(self, other: "Counts") -> "Counts":
        return Counts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    def as_dict(self) -> dict:
        return {**asdict(self), "precision": self.precision, "recall": self.recall, "f1": self.f1}


@dataclass(frozen=True)
class Metrics:
    per_kind: dict[str, Counts]
    overall: Counts

    def __getitem__(self, kind: str) -> Counts:
        return self.overall if kind == "overall" else self.per_kind[kind]

    def as_dict(self) -> dict:
        out = {k: c.as_dict() for k, c in self.per_kind.items()}
        out["overall"] = self.overall.as_dict()
        return out


@dataclass(frozen=True)
class ErrorTable:
    false_positives: list[tuple[str, int]] = field(default_factory=list)
    false_negatives: list[tuple[str, int]] = field(default_factory=list)
    k: int = 10


def _span_sets(gold: Sequence[Mention], pred: Sequence[Mention]):
    gold_docs = {m.doc_checksum for m in gold}
    stray = sorted({m.doc_checksum for m in pred} - gold_docs)
    if gold and stray:
        raise MixedDocuments(f"predictions reference documents absent from gold: {stray[:3]}")
    # duplicate identical spans collapse, so matching is one-to-one
    return {m.span_key for m in gold}, {m.span_key for m in pred}


def score_strict(gold: Sequence[Mention], pred: Sequence[Mention]) -> Metrics:
    """Exact (doc, page, start, end, kind) matching; per kind and overall."""
    g, p = _span_sets(gold, pred)
    per_kind = {}
    for kind in KINDS:
        gk = {s for s in g if s[4] == kind}
        pk = {s for s in p if s[4] == kind}
        tp = len(gk & pk)
        per_kind[kind.value] = Counts(tp, len(pk) - tp, len(gk) - tp)
    overall = Counts()
    for c in per_kind.values():
        overall = overall + c
    return Metrics(per_kind, overall)


def _ranked(counter: Counter, k: int) -> list[tuple[str, int]]:
    return sorted(counter.items(), key=lambda kv: (-kv[1], kv[0]))[:k]


def error_table(gold: Sequence[Mention], pred: Sequence[Mention], k: int = 10) -> ErrorTable:
    if k < 1:
        raise ValueError("k must be >= 1")
    g, p = _span_sets(gold, pred)
    fp = Counter(m.surface for m in {m.span_key: m for m in pred}.values() if m.span_key not in g)
    fn = Counter(m.surface for m in {m.span_key: m for m in gold}.values() if m.span_key not in p)
    return ErrorTable(_ranked(fp, k), _ranked(fn, k), k)


def format_metrics(metrics: Metrics) -> str:
    lines = [f"{'':10s} {'P':>7s} {'R':>7s} {'F1':>7s} {'tp':>7s} {'fp':>7s} {'fn':>7s}"]
    for name in [k.value for k in KINDS] + ["overall"]:
        c = metrics[name]
        lines.append(
            f"{name:10s} {c.precision:7.3f} {c.recall:7.3f} {c.f1:7.3f} {c.tp:7d} {c.fp:7d} {c.fn:7d}"
        )
    return "\n".join(lines)


def format_error_table(table: ErrorTable) -> str:
    width = max([len(s) for s, _ in table.false_positives + table.false_negatives] + [14])
    lines = [f"{'false positives':<{width + 8}s}  false negatives"]
    for i in range(max(len(table.false_positives), len(table.false_negatives))):
        left = right = ""
        if i < len(table.false_positives):
            s, n = table.false_positives[i]
            left = f"{s:<{width}s} {n:>7d}"
        if i < len(table.false_negatives):
            s, n = table.false_negatives[i]
            right = f"{s:<{width}s} {n:>7d}"
        lines.append(f"{left:<{width + 8}s}  {right}".rstrip())
    return "\n".join(lines)
