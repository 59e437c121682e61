"""Candidate sentences holding both a chemical and a role, and their pairs."""
from __future__ import annotations

import bisect
import json
from dataclasses import dataclass
from typing import Iterable, Iterator

from .annotate import AnnotatedDocument, Mention
from .corpus import DocumentStore, Sentence, TextLocation, UnknownDocument, segment_sentences
from .ontology import TermKind, normalize_surface


@dataclass(frozen=True)
class CandidateSentence:
    sentence: Sentence
    chemicals: tuple[Mention, ...]
    roles: tuple[Mention, ...]


@dataclass(frozen=True)
class CandidatePair:
    location: TextLocation
    sentence_text: str
    chemical_surface: str
    role_surface: str

    def to_json(self) -> dict:
        return {
            **self.location.as_dict(),
            "sentence": self.sentence_text,
            "chemical": self.chemical_surface,
            "role": self.role_surface,
        }

    @classmethod
    def from_json(cls, raw: dict) -> "CandidatePair":
        return cls(
            TextLocation(raw["doc_checksum"], int(raw["page"]), int(raw["offset"])),
            raw["sentence"],
            raw["chemical"],
            raw["role"],
        )


def extract_candidates(doc: AnnotatedDocument, store: DocumentStore) -> list[CandidateSentence]:
    """Sentences with at least one chemical and one role, in document order.

    A mention belongs to the sentence whose span contains its start.
    """
    if doc.doc_checksum not in store:
        raise UnknownDocument(doc.doc_checksum)
    stored = store.get(doc.doc_checksum)
    by_page: dict[int, list[Mention]] = {}
    for m in doc.mentions:
        by_page.setdefault(m.page, []).append(m)

    out = []
    for page in stored.pages:
        mentions = by_page.get(page.number)
        if not mentions:
            continue
        sentences = segment_sentences(page, stored.checksum)
        starts = [s.start for s in sentences]
        assigned: dict[int, list[Mention]] = {}
        for m in mentions:
            i = bisect.bisect_right(starts, m.start) - 1
            if i >= 0 and m.start < sentences[i].end:
                assigned.setdefault(i, []).append(m)
        for i in sorted(assigned):
            ms = sorted(assigned[i], key=lambda m: (m.start, m.end))
            chems = tuple(m for m in ms if m.kind == TermKind.CHEMICAL)
            roles = tuple(m for m in ms if m.kind == TermKind.ROLE)
            if chems and roles:
                out.append(CandidateSentence(sentences[i], chems, roles))
    return out


def _distinct(mentions: Iterable[Mention]) -> list[str]:
    seen = {}
    for m in mentions:
        seen.setdefault(normalize_surface(m.surface), m.surface)
    return list(seen.values())


def enumerate_pairs(c: CandidateSentence) -> list[CandidatePair]:
    """All distinct chemical x distinct role surfaces, in text order."""
    chems = _distinct(c.chemicals)
    roles = _distinct(c.roles)
    return [
        CandidatePair(c.sentence.location, c.sentence.text, chem, role)
        for chem in chems
        for role in roles
    ]


def iter_pairs(candidates: Iterable[CandidateSentence]) -> Iterator[CandidatePair]:
    for c in candidates:
        yield from enumerate_pairs(c)


def write_pairs(pairs: Iterable[CandidatePair], path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            fh.write(json.dumps(p.to_json(), ensure_ascii=False, sort_keys=True) + "\n")
            n += 1
    return n


def read_pairs(path) -> list[CandidatePair]:
    with open(path, encoding="utf-8") as fh:
        return [CandidatePair.from_json(json.loads(line)) for line in fh if line.strip()]
