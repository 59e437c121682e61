"""Page-wise paper text: content identities, a de-duplicating store, and
sentence segmentation with page-relative character offsets.

Offsets everywhere count Python ``str`` indices, i.e. Unicode scalar values.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence, Union

logger = logging.getLogger(__name__)

PAGE_SEPARATOR = "\f"

DEFAULT_ABBREVIATIONS = ("approx.", "e.g.", "i.e.", "et al.", "Fig.", "vs.")


class CorpusError(Exception):
    pass


class EmptyDocument(CorpusError):
    pass


class NonMonotonicPages(CorpusError):
    pass


class VerificationFailed(CorpusError):
    pass


class UnknownDocument(CorpusError, KeyError):
    pass


def compute_checksum(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


@dataclass(frozen=True)
class Page:
    number: int
    text: str

    def __post_init__(self):
        if self.number < 1:
            raise ValueError(f"page number must be >= 1, got {self.number}")
        if "\x00" in self.text:
            raise ValueError(f"page {self.number} contains a NUL character")


@dataclass(frozen=True, order=True)
class TextLocation:
    doc_checksum: str
    page: int
    offset: int

    def as_dict(self) -> dict:
        return {"doc_checksum": self.doc_checksum, "page": self.page, "offset": self.offset}


@dataclass(frozen=True)
class Sentence:
    location: TextLocation
    text: str

    @property
    def start(self) -> int:
        return self.location.offset

    @property
    def end(self) -> int:
        return self.location.offset + len(self.text)


@dataclass(frozen=True)
class Document:
    checksum: str
    source_name: str
    pages: tuple[Page, ...]
    # "text" when the digest covers the joined page text, "source" for raw file bytes
    checksum_basis: str = "text"

    def page(self, number: int) -> Page:
        for p in self.pages:
            if p.number == number:
                return p
        raise KeyError(f"document {self.checksum[:12]} has no page {number}")

    def to_json(self) -> dict:
        return {
            "checksum": self.checksum,
            "source_name": self.source_name,
            "checksum_basis": self.checksum_basis,
            "pages": [{"number": p.number, "text": p.text} for p in self.pages],
        }


@dataclass(frozen=True)
class Added:
    document: Document

    @property
    def checksum(self) -> str:
        return self.document.checksum


@dataclass(frozen=True)
class Duplicate:
    checksum: str


IngestResult = Union[Added, Duplicate]


def _validate_pages(pages: Sequence[tuple[int, str]]) -> tuple[Page, ...]:
    if not pages or all(not text.strip() for _, text in pages):
        raise EmptyDocument("document has no (non-empty) pages")
    out = []
    prev = 0
    for number, text in pages:
        if number <= prev:
            raise NonMonotonicPages(f"page {number} follows page {prev}")
        prev = number
        out.append(Page(int(number), text))
    return tuple(out)


def text_checksum(pages: Sequence[tuple[int, str]]) -> str:
    """Digest of the page texts joined by form feeds, UTF-8 encoded."""
    joined = PAGE_SEPARATOR.join(text for _, text in pages)
    return compute_checksum(joined.encode("utf-8"))


class DocumentStore:
    """Directory of ``<checksum>.json`` files.

    The directory listing is authoritative. Inserts are serialized so the
    duplicate check and the write are atomic per checksum.
    """

    def __init__(self, root: Union[str, os.PathLike]):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._cache: dict[str, Document] = {}

    def _path(self, checksum: str) -> Path:
        return self.root / f"{checksum}.json"

    def __contains__(self, checksum: str) -> bool:
        return self._path(checksum).exists()

    def __len__(self) -> int:
        return sum(1 for _ in self.checksums())

    def checksums(self) -> list[str]:
        return sorted(p.stem for p in self.root.glob("*.json") if len(p.stem) == 64)

    def get(self, checksum: str) -> Document:
        doc = self._cache.get(checksum)
        if doc is not None:
            return doc
        path = self._path(checksum)
        if not path.exists():
            raise UnknownDocument(checksum)
        with path.open(encoding="utf-8") as fh:
            raw = json.load(fh)
        doc = Document(
            checksum=raw["checksum"],
            source_name=raw.get("source_name", ""),
            pages=tuple(Page(p["number"], p["text"]) for p in raw["pages"]),
            checksum_basis=raw.get("checksum_basis", "text"),
        )
        self._cache[checksum] = doc
        return doc

    def __iter__(self) -> Iterator[Document]:
        for checksum in self.checksums():
            yield self.get(checksum)

    def put_if_absent(self, doc: Document) -> bool:
        with self._lock:
            path = self._path(doc.checksum)
            if path.exists():
                return False
            tmp = path.with_suffix(".tmp")
            with tmp.open("w", encoding="utf-8") as fh:
                json.dump(doc.to_json(), fh, ensure_ascii=False, sort_keys=True)
            os.replace(tmp, path)
            self._cache[doc.checksum] = doc
            return True


def ingest_document(
    pages: Sequence[tuple[int, str]],
    source_name: str,
    store: DocumentStore,
    checksum: str | None = None,
    source_bytes: bytes | None = None,
) -> IngestResult:
    """Add a document to ``store`` unless its content is already present.

    With ``source_bytes`` (e.g. the original PDF) the identity is the digest
    of those bytes; otherwise it is the digest of the joined page texts. A
    caller-supplied ``checksum`` must agree with the computed one.
    """
    validated = _validate_pages(pages)
    if source_bytes is not None:
        digest, basis = compute_checksum(source_bytes), "source"
    else:
        digest, basis = text_checksum(pages), "text"
    if checksum is not None and checksum.lower() != digest:
        raise VerificationFailed(f"{source_name}: declared checksum {checksum} != computed {digest}")
    doc = Document(digest, source_name, validated, basis)
    if store.put_if_absent(doc):
        return Added(doc)
    return Duplicate(digest)


def load_document_file(path: Union[str, os.PathLike]) -> dict:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict) or "pages" not in raw:
        raise CorpusError(f"{path}: not a document file")
    return raw


def ingest_file(path: Union[str, os.PathLike], store: DocumentStore) -> IngestResult:
    raw = load_document_file(path)
    pages = [(int(p["number"]), p["text"]) for p in raw["pages"]]
    return ingest_document(
        pages, raw.get("source_name") or Path(path).name, store, checksum=raw.get("checksum")
    )


def iter_document_files(path: Union[str, os.PathLike]) -> list[Path]:
    path = Path(path)
    if path.is_dir():
        return sorted(p for p in path.rglob("*.json") if p.is_file())
    return [path]


# -- sentence segmentation ---------------------------------------------------

# a whitespace run either directly after terminal punctuation, or holding a blank line
_BREAK_CANDIDATE = re.compile(r"(?<=[.!?])\s+|\s*\n[^\S\n]*\n\s*")


def _guarded(text: str, punct_end: int, abbreviations: Iterable[str]) -> bool:
    head = text[:punct_end]
    for abbr in abbreviations:
        if head.endswith(abbr):
            before = punct_end - len(abbr) - 1
            if before < 0 or not text[before].isalnum():
                return True
    return False


def sentence_spans(
    text: str, abbreviations: Sequence[str] = DEFAULT_ABBREVIATIONS
) -> list[tuple[int, int]]:
    """Half-open ``(start, end)`` spans of the sentences in ``text``.

    A boundary sits at ``.``, ``!`` or ``?`` followed by whitespace and an
    uppercase letter or digit, unless the text up to the punctuation ends in
    a guarded abbreviation. Two or more newlines in a whitespace run always
    break. Spans are trimmed of surrounding whitespace.
    """
    breaks: list[tuple[int, int]] = []
    n = len(text)
    for m in _BREAK_CANDIDATE.finditer(text):
        a, b = m.span()
        if text.count("\n", a, b) >= 2:
            breaks.append((a, b))
            continue
        if b >= n:
            continue
        nxt = text[b]
        if not (nxt.isupper() or nxt.isdigit()):
            continue
        if _guarded(text, a, abbreviations):
            continue
        breaks.append((a, b))

    spans = []
    cursor = 0
    for a, b in breaks + [(n, n)]:
        start, end = cursor, a
        while start < end and text[start].isspace():
            start += 1
        while end > start and text[end - 1].isspace():
            end -= 1
        if start < end:
            spans.append((start, end))
        cursor = b
    return spans


def segment_sentences(
    page: Page, doc_checksum: str, abbreviations: Sequence[str] = DEFAULT_ABBREVIATIONS
) -> list[Sentence]:
    return [
        Sentence(TextLocation(doc_checksum, page.number, s), page.text[s:e])
        for s, e in sentence_spans(page.text, abbreviations)
    ]


def document_sentences(doc: Document) -> Iterator[Sentence]:
    for page in doc.pages:
        yield from segment_sentences(page, doc.checksum)

