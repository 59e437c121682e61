"""Typed mentions: gazetteer annotation, standoff interchange and merging."""
from __future__ import annotations

import enum
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence, TextIO, Union

from .corpus import DocumentStore, Sentence, TextLocation, UnknownDocument, document_sentences
from .ontology import Lexicon, TermKind


class AnnotationError(Exception):
    pass


class SpanOutOfRange(AnnotationError):
    pass


class SurfaceMismatch(AnnotationError):
    pass


class Provenance(str, enum.Enum):
    GAZETTEER = "gazetteer"
    EXTERNAL = "external"
    GOLD = "gold"


# merge priority on equal span length
_PROVENANCE_RANK = {Provenance.GOLD: 2, Provenance.EXTERNAL: 1, Provenance.GAZETTEER: 0}


@dataclass(frozen=True, order=True)
class Mention:
    doc_checksum: str
    page: int
    start: int
    end: int
    kind: TermKind
    surface: str
    provenance: Provenance = Provenance.GAZETTEER

    def __post_init__(self):
        if self.end <= self.start:
            raise ValueError(f"empty or inverted span [{self.start}, {self.end})")
        if self.kind not in (TermKind.CHEMICAL, TermKind.ROLE):
            raise ValueError(f"mention kind must be chemical or role, got {self.kind}")

    @property
    def location(self) -> TextLocation:
        return TextLocation(self.doc_checksum, self.page, self.start)

    @property
    def span_key(self) -> tuple:
        return (self.doc_checksum, self.page, self.start, self.end, self.kind)

    def overlaps(self, other: "Mention") -> bool:
        return (
            self.doc_checksum == other.doc_checksum
            and self.page == other.page
            and self.start < other.end
            and other.start < self.end
        )

    def to_json(self) -> dict:
        return {
            "page": self.page,
            "start": self.start,
            "end": self.end,
            "kind": self.kind.value,
            "surface": self.surface,
        }


def _sort_key(m: Mention):
    return (m.doc_checksum, m.page, m.start, m.end, m.kind.value, m.provenance.value)


@dataclass
class AnnotatedDocument:
    doc_checksum: str
    mentions: list[Mention] = field(default_factory=list)
    provenance: Provenance = Provenance.EXTERNAL

    def __post_init__(self):
        self.mentions = sorted(self.mentions, key=_sort_key)

    def to_json(self) -> dict:
        return {
            "doc_checksum": self.doc_checksum,
            "provenance": self.provenance.value,
            "mentions": [m.to_json() for m in self.mentions],
        }


# -- gazetteer matching --------------------------------------------------------

_ASCII_WS = {c: " " for c in (9, 10, 11, 12, 13, 28, 29, 30, 31)}


def _fold_char(c: str) -> str:
    return " " if c.isspace() else c.casefold()


def fold_text(text: str) -> tuple[str, list[int] | None]:
    """Case-fold ``text`` for matching against lexicon keys.

    Whitespace characters fold to a single space. Returns the folded string
    and, only when some character folds to several, a map from folded index
    to original index (``-1`` marks continuation positions).
    """
    folded = text.casefold()
    if len(folded) == len(text):
        # one-to-one fold: only whitespace needs rewriting
        if folded.isascii():
            return folded.translate(_ASCII_WS), None
        return "".join(" " if c.isspace() else c for c in folded), None
    parts = [_fold_char(c) for c in text]
    joined = "".join(parts)
    index: list[int] = []
    for i, part in enumerate(parts):
        index.append(i)
        index.extend([-1] * (len(part) - 1))
    index.append(len(text))
    return joined, index


def _is_boundary(text: str, start: int, end: int) -> bool:
    return (start == 0 or not text[start - 1].isalnum()) and (
        end == len(text) or not text[end].isalnum()
    )


def select_leftmost_longest(spans: Iterable[tuple[int, int, object]]) -> list[tuple[int, int, object]]:
    """Greedy left-to-right choice of non-overlapping spans, longest first at each start."""
    chosen = []
    cursor = 0
    for start, end, payload in sorted(spans, key=lambda s: (s[0], -s[1])):
        if start >= cursor:
            chosen.append((start, end, payload))
            cursor = end
    return chosen


def match_text(text: str, lexicon: Lexicon) -> list[tuple[int, int, TermKind]]:
    """Leftmost-longest, token-bounded lexicon matches in ``text``."""
    if not lexicon.entries or not text:
        return []
    folded, index = fold_text(text)
    found = []
    for last, (length, kind) in lexicon.matcher.iter(folded):
        fstart, fend = last - length + 1, last + 1
        if index is None:
            start, end = fstart, fend
        else:
            start = index[fstart]
            if start < 0 or (fend < len(index) and index[fend] < 0):
                continue
            end = index[fend]
        if _is_boundary(text, start, end):
            found.append((start, end, kind))
    return select_leftmost_longest(found)


def gazetteer_annotate(
    sentence: Sentence, lexicon: Lexicon, kind: TermKind | None = None
) -> list[Mention]:
    """Mentions of lexicon keys inside one sentence.

    When ``kind`` is given only entries of that kind are matched; otherwise
    each mention takes the kind of the entry it matched.
    """
    if kind is not None and lexicon.kinds - {kind}:
        lexicon = _restricted(lexicon, kind)
    loc = sentence.location
    base = loc.offset
    return [
        Mention(loc.doc_checksum, loc.page, base + s, base + e, k, sentence.text[s:e], Provenance.GAZETTEER)
        for s, e, k in match_text(sentence.text, lexicon)
    ]


def _restricted(lexicon: Lexicon, kind: TermKind) -> Lexicon:
    # kept on the lexicon itself so the compiled matcher is reused per kind
    cache = lexicon.__dict__.setdefault("_by_kind", {})
    if kind not in cache:
        cache[kind] = lexicon.restrict([kind])
    return cache[kind]


def annotate_sentences(sentences: Iterable[Sentence], lexicon: Lexicon) -> list[Mention]:
    out = []
    for s in sentences:
        out.extend(gazetteer_annotate(s, lexicon))
    return out


def annotate_document(doc, lexicon: Lexicon) -> AnnotatedDocument:
    return AnnotatedDocument(
        doc.checksum, annotate_sentences(document_sentences(doc), lexicon), Provenance.GAZETTEER
    )


# -- standoff interchange -----------------------------------------------------

def load_standoff(stream: Union[TextIO, str, os.PathLike], store: DocumentStore) -> AnnotatedDocument:
    """Read a standoff file and check every span against the stored page text."""
    if isinstance(stream, (str, os.PathLike)):
        with open(stream, encoding="utf-8") as fh:
            raw = json.load(fh)
    else:
        raw = json.load(stream)
    checksum = raw["doc_checksum"]
    if checksum not in store:
        raise UnknownDocument(checksum)
    doc = store.get(checksum)
    provenance = Provenance(raw.get("provenance", "external"))
    mentions = []
    for m in raw["mentions"]:
        page_no, start, end = int(m["page"]), int(m["start"]), int(m["end"])
        try:
            text = doc.page(page_no).text
        except KeyError as exc:
            raise SpanOutOfRange(f"{checksum[:12]}: no page {page_no}") from exc
        if not 0 <= start < end <= len(text):
            raise SpanOutOfRange(f"{checksum[:12]} p{page_no}: [{start}, {end}) outside 0..{len(text)}")
        actual = text[start:end]
        if m.get("surface", actual) != actual:
            raise SurfaceMismatch(f"{checksum[:12]} p{page_no} [{start}, {end}): {m['surface']!r} != {actual!r}")
        mentions.append(Mention(checksum, page_no, start, end, TermKind(m["kind"]), actual, provenance))
    return AnnotatedDocument(checksum, mentions, provenance)


def dump_standoff(doc: AnnotatedDocument, path: Union[str, os.PathLike]) -> None:
    Path(path).write_text(json.dumps(doc.to_json(), ensure_ascii=False, indent=1), encoding="utf-8")


def merge_annotations(a: Sequence[Mention], b: Sequence[Mention]) -> list[Mention]:
    """Union of two mention lists with overlaps resolved.

    Longer span wins; then gold > external > gazetteer; then earlier start.
    The result does not depend on argument order.
    """
    def priority(m: Mention):
        return (-(m.end - m.start), -_PROVENANCE_RANK[m.provenance], m.start, m.kind.value, m.doc_checksum, m.page)

    accepted: dict[tuple[str, int], list[Mention]] = {}
    for m in sorted(set(a) | set(b), key=priority):
        bucket = accepted.setdefault((m.doc_checksum, m.page), [])
        if any(m.overlaps(o) for o in bucket):
            continue
        bucket.append(m)
    return sorted((m for bucket in accepted.values() for m in bucket), key=_sort_key)
