"""OBO flat-file parsing, chemical/role classification and surface-form lexicons."""
from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, TextIO, Union

ROLE_ROOT = "CHEBI:50906"
ENTITY_ROOT = "CHEBI:24431"


class OntologyError(Exception):
    pass


class MalformedStanza(OntologyError):
    def __init__(self, lineno: int, line: str, reason: str = "unparseable line"):
        super().__init__(f"line {lineno}: {reason}: {line!r}")
        self.lineno = lineno


class CyclicIsA(OntologyError):
    def __init__(self, cycle: list[str]):
        super().__init__("is_a cycle: " + " -> ".join(cycle))
        self.cycle = cycle


class TermKind(str, enum.Enum):
    CHEMICAL = "chemical"
    ROLE = "role"
    NEITHER = "neither"
    CONFLICT = "conflict"


class SurfaceKind(str, enum.Enum):
    LABEL = "label"
    SYNONYM = "synonym"


@dataclass
class OntologyTerm:
    id: str
    label: str = ""
    synonyms: list[str] = field(default_factory=list)
    parents: list[str] = field(default_factory=list)
    obsolete: bool = False


@dataclass
class Ontology:
    terms: dict[str, OntologyTerm] = field(default_factory=dict)
    role_root: str = ROLE_ROOT
    entity_root: str = ENTITY_ROOT
    diagnostics: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.terms)

    def __getitem__(self, term_id: str) -> OntologyTerm:
        return self.terms[term_id]

    def __contains__(self, term_id: str) -> bool:
        return term_id in self.terms


_TAG_LINE = re.compile(r"^([A-Za-z0-9_-]+):\s*(.*)$")
_QUOTED = re.compile(r'^"((?:[^"\\]|\\.)*)"')
_TRAILING_COMMENT = re.compile(r"\s+!.*$")
_TRAILING_MODIFIER = re.compile(r"\s*\{[^}]*\}\s*$")


def _unescape(s: str) -> str:
    return re.sub(r"\\(.)", lambda m: {"n": "\n", "t": "\t"}.get(m.group(1), m.group(1)), s)


def _strip_value(value: str) -> str:
    value = _TRAILING_COMMENT.sub("", value)
    value = _TRAILING_MODIFIER.sub("", value)
    return value.strip()


def parse_obo(
    stream: Union[TextIO, Iterable[str]],
    role_root: str = ROLE_ROOT,
    entity_root: str = ENTITY_ROOT,
) -> Ontology:
    """Read ``[Term]`` stanzas (id, name, synonym, is_a, is_obsolete).

    Other stanza types and tags are skipped. Raises :class:`MalformedStanza`
    for non tag-value lines inside a stanza and :class:`CyclicIsA` when the
    resolved is_a edges contain a cycle.
    """
    onto = Ontology(role_root=role_root, entity_root=entity_root)
    current: OntologyTerm | None = None
    in_term = False
    stanza_start = 0

    def flush():
        if current is None:
            return
        if not current.id:
            raise MalformedStanza(stanza_start, "[Term]", "stanza without id")
        if current.id in onto.terms:
            raise MalformedStanza(stanza_start, current.id, "duplicate term id")
        onto.terms[current.id] = current

    for lineno, raw in enumerate(stream, 1):
        line = raw.rstrip("\r\n")
        stripped = line.strip()
        if not stripped or stripped.startswith("!"):
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            if in_term:
                flush()
            in_term = stripped == "[Term]"
            current = OntologyTerm(id="") if in_term else None
            stanza_start = lineno
            continue
        m = _TAG_LINE.match(stripped)
        if m is None:
            if in_term or current is not None:
                raise MalformedStanza(lineno, line)
            continue
        if not in_term:
            continue
        tag, value = m.group(1), m.group(2)
        if tag == "id":
            current.id = _strip_value(value)
        elif tag == "name":
            current.label = _strip_value(value)
        elif tag == "synonym":
            q = _QUOTED.match(value.strip())
            if q is None:
                raise MalformedStanza(lineno, line, "synonym without quoted text")
            current.synonyms.append(_unescape(q.group(1)))
        elif tag == "is_a":
            target = _strip_value(value).split()
            if not target:
                raise MalformedStanza(lineno, line, "empty is_a")
            current.parents.append(target[0])
        elif tag == "is_obsolete":
            current.obsolete = _strip_value(value).lower() == "true"
    if in_term:
        flush()

    for term in sorted(onto.terms.values(), key=lambda t: t.id):
        for parent in term.parents:
            if parent not in onto.terms:
                onto.diagnostics.append(f"DanglingReference: {term.id} is_a {parent}")
    _check_acyclic(onto)
    return onto


def _check_acyclic(onto: Ontology) -> None:
    WHITE, GREY, BLACK = 0, 1, 2
    color = {tid: WHITE for tid in onto.terms}
    for root in sorted(onto.terms):
        if color[root] != WHITE:
            continue
        # iterative DFS keeping the grey path for cycle reporting
        path = [root]
        stack = [iter(onto.terms[root].parents)]
        color[root] = GREY
        while stack:
            nxt = next(stack[-1], None)
            if nxt is None:
                color[path.pop()] = BLACK
                stack.pop()
                continue
            if nxt not in color:
                continue
            if color[nxt] == GREY:
                raise CyclicIsA(path[path.index(nxt):] + [nxt])
            if color[nxt] == WHITE:
                color[nxt] = GREY
                path.append(nxt)
                stack.append(iter(onto.terms[nxt].parents))


def _ancestors(onto: Ontology) -> dict[str, frozenset[str]]:
    """Reflexive-transitive is_a closure per term; dangling targets are kept."""
    memo: dict[str, frozenset[str]] = {}

    def visit(tid: str) -> frozenset[str]:
        # iterative post-order so deep hierarchies don't hit the recursion limit
        stack = [(tid, False)]
        while stack:
            node, expanded = stack.pop()
            if node in memo:
                continue
            term = onto.terms.get(node)
            parents = term.parents if term is not None else []
            if expanded:
                acc = {node}
                for p in parents:
                    acc |= memo[p]
                memo[node] = frozenset(acc)
            else:
                stack.append((node, True))
                stack.extend((p, False) for p in parents if p not in memo)
        return memo[tid]

    for tid in onto.terms:
        visit(tid)
    return memo


def classify(ontology: Ontology) -> dict[str, TermKind]:
    closure = _ancestors(ontology)
    kinds = {}
    for tid, term in ontology.terms.items():
        if term.obsolete:
            kinds[tid] = TermKind.NEITHER
            continue
        up = closure[tid]
        is_role = ontology.role_root in up
        is_chem = ontology.entity_root in up
        if is_role and is_chem:
            kinds[tid] = TermKind.CONFLICT
        elif is_role:
            kinds[tid] = TermKind.ROLE
        elif is_chem:
            kinds[tid] = TermKind.CHEMICAL
        else:
            kinds[tid] = TermKind.NEITHER
    return kinds


_WS = re.compile(r"\s+")


def normalize_surface(s: str) -> str:
    """Trim, collapse whitespace runs to one space, case-fold."""
    return _WS.sub(" ", s.strip()).casefold()


@dataclass(frozen=True)
class LexiconEntry:
    term_id: str
    kind: TermKind
    surface_kind: SurfaceKind


class Lexicon:
    """Normalized surface form -> ontology term, plus a compiled matcher.

    The matcher (an Aho-Corasick automaton) is built lazily on first use.
    """

    def __init__(
        self,
        entries: dict[str, LexiconEntry],
        min_length: int,
        diagnostics: list[str] | None = None,
        labels: dict[str, str] | None = None,
    ):
        self.entries = dict(sorted(entries.items()))
        self.min_length = min_length
        self.diagnostics = diagnostics or []
        self.labels = labels or {}

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, key: str) -> bool:
        return key in self.entries

    def lookup(self, surface: str) -> LexiconEntry | None:
        return self.entries.get(normalize_surface(surface))

    @property
    def kinds(self) -> frozenset[TermKind]:
        return frozenset(e.kind for e in self.entries.values())

    @cached_property
    def max_key_length(self) -> int:
        return max((len(k) for k in self.entries), default=0)

    @cached_property
    def matcher(self):
        import ahocorasick

        automaton = ahocorasick.Automaton()
        for key, entry in self.entries.items():
            automaton.add_word(key, (len(key), entry.kind))
        if len(automaton):
            automaton.make_automaton()
        return automaton

    def restrict(self, kinds: Iterable[TermKind]) -> "Lexicon":
        kinds = set(kinds)
        return Lexicon(
            {k: e for k, e in self.entries.items() if e.kind in kinds},
            self.min_length,
            list(self.diagnostics),
            self.labels,
        )

    def to_json(self) -> dict:
        return {
            "min_length": self.min_length,
            "entries": [
                {"key": k, "id": e.term_id, "kind": e.kind.value, "surface_kind": e.surface_kind.value}
                for k, e in self.entries.items()
            ],
            "labels": dict(sorted(self.labels.items())),
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_json(cls, raw: dict) -> "Lexicon":
        entries = {
            e["key"]: LexiconEntry(
                e["id"], TermKind(e["kind"]), SurfaceKind(e.get("surface_kind", "label"))
            )
            for e in raw["entries"]
        }
        return cls(entries, int(raw["min_length"]), raw.get("diagnostics", []), raw.get("labels", {}))

    def dump(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, ensure_ascii=False, indent=1)

    @classmethod
    def load(cls, path) -> "Lexicon":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def build_lexicon(
    ontology: Ontology,
    kinds: dict[str, TermKind],
    include: Iterable[TermKind] = (TermKind.ROLE,),
    min_length: Union[int, dict[TermKind, int]] = 4,
) -> Lexicon:
    """Compile labels and synonyms of the included terms into a lexicon.

    Forms shorter than ``min_length`` (raw or normalized) are dropped; a dict
    gives a threshold per kind. A key claimed by two different terms is
    excluded and reported.
    """
    include = set(include) - {TermKind.CONFLICT}
    if isinstance(min_length, dict):
        per_kind = {k: int(min_length.get(k, 1)) for k in include}
    else:
        per_kind = {k: int(min_length) for k in include}
    if any(v < 1 for v in per_kind.values()):
        raise ValueError("min_length must be >= 1")
    # key -> term id -> (entry, whether some form of that term passes the raw-length rule)
    claims: dict[str, dict[str, tuple[LexiconEntry, bool]]] = {}
    diagnostics: list[tuple[str, str]] = []
    labels = {}

    for tid in sorted(ontology.terms):
        term = ontology.terms[tid]
        kind = kinds.get(tid, TermKind.NEITHER)
        if kind == TermKind.CONFLICT and not term.obsolete:
            diagnostics.append((tid, f"ConflictingKind: {tid} is both chemical entity and role"))
            continue
        if term.obsolete or kind not in include:
            continue
        labels[tid] = term.label
        threshold = per_kind[kind]
        forms = [(term.label, SurfaceKind.LABEL)] + [(s, SurfaceKind.SYNONYM) for s in term.synonyms]
        for raw, surface_kind in forms:
            key = normalize_surface(raw)
            if len(key) < threshold:
                continue
            # homonyms are decided on the key alone so raising the threshold
            # can never resurrect a colliding key
            passes = len(raw) >= threshold
            per_term = claims.setdefault(key, {})
            prev = per_term.get(tid)
            entry = LexiconEntry(tid, kind, surface_kind)
            if prev is None:
                per_term[tid] = (entry, passes)
            elif passes and (not prev[1] or (prev[0].surface_kind == SurfaceKind.SYNONYM
                                             and surface_kind == SurfaceKind.LABEL)):
                per_term[tid] = (entry, True)

    entries = {}
    for key, per_term in claims.items():
        if len(per_term) > 1:
            ids = sorted(per_term)
            diagnostics.append((ids[0], f"AmbiguousSurfaceForm: {key!r} claimed by {', '.join(ids)}"))
            continue
        entry, passes = next(iter(per_term.values()))
        if passes:
            entries[key] = entry
    diagnostics.sort()
    used = {e.term_id for e in entries.values()}
    return Lexicon(
        entries,
        min(per_kind.values(), default=1),
        [msg for _, msg in diagnostics],
        {tid: lab for tid, lab in labels.items() if tid in used},
    )


def load_obo(path) -> Ontology:
    with open(path, encoding="utf-8") as fh:
        return parse_obo(fh)
