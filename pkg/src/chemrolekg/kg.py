"""Knowledge graph assembly from confirmed (chemical, role) verdicts.

Surfaces are grounded to ChEBI through label/synonym lexicons; the rest get
identifiers in the CEAR namespace. Relations carry their supporting text
locations, are thresholded by ``min_ref`` and serialized as Turtle,
RDF-star (with locations) or a static HTML graph.
"""
from __future__ import annotations

import html
import json
import re
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .corpus import TextLocation
from .ontology import ENTITY_ROOT, ROLE_ROOT, Lexicon, TermKind, normalize_surface
from .validate import Verdict, VerdictRecord

RDF = "http://www.w3.org/1999/02/22-rdf-syntax-ns#"
RDFS = "http://www.w3.org/2000/01/rdf-schema#"
OBO = "http://purl.obolibrary.org/obo/"
CEAR = "https://wwwiti.cs.uni-magdeburg.de/iti_dke/cear/"
HAS_ROLE = "obo:RO_0000087"

PREFIXES = (
    f"@prefix rdf: <{RDF}> .\n"
    f"@prefix rdfs: <{RDFS}> .\n"
    f"@prefix obo: <{OBO}> .\n"
    f"@prefix cear: <{CEAR}> .\n"
)

COLORS = {
    ("chebi", TermKind.CHEMICAL): "#8B0000",
    ("cear", TermKind.CHEMICAL): "#F08080",
    ("chebi", TermKind.ROLE): "#00008B",
    ("cear", TermKind.ROLE): "#ADD8E6",
}

STATS_ROWS = (
    "number of relations",
    "number of relevant text positions",
    "distinct chemical entities (ChEBI)",
    "distinct chemical entities (CEAR)",
    "distinct chemical roles (ChEBI)",
    "distinct chemical roles (CEAR)",
)
DEFAULT_STATS_MIN_REFS = (1, 2, 5, 10, 20, 50)


class TooShort(ValueError):
    pass


@dataclass(frozen=True)
class EntityRef:
    kind: TermKind
    source: str  # "chebi" | "cear"
    key: str  # CURIE for ChEBI, normalized surface for CEAR
    label: str = field(default="", compare=False)
    local_name: str = field(default="", compare=False)

    @property
    def is_chebi(self) -> bool:
        return self.source == "chebi"

    @property
    def curie(self) -> str:
        if self.is_chebi:
            return "obo:" + self.key.replace(":", "_")
        return "cear:" + self.local_name

    @property
    def iri(self) -> str:
        if self.is_chebi:
            return OBO + self.key.replace(":", "_")
        return CEAR + self.local_name

    @property
    def type_curie(self) -> str:
        return "obo:" + (ENTITY_ROOT if self.kind == TermKind.CHEMICAL else ROLE_ROOT).replace(":", "_")

    def order_key(self):
        ident = self.key if self.is_chebi else self.local_name
        m = re.match(r"^(.*?)(\d+)$", ident)
        num = (m.group(1), int(m.group(2))) if m else (ident, -1)
        return (0 if self.is_chebi else 1, 0 if self.kind == TermKind.ROLE else 1, num, ident)


@dataclass(frozen=True)
class Relation:
    entity: EntityRef
    role: EntityRef
    locations: tuple[TextLocation, ...]

    @property
    def count(self) -> int:
        return len(self.locations)


@dataclass
class KnowledgeGraph:
    relations: list[Relation]
    min_ref: int = 1

    @property
    def refs(self) -> list[EntityRef]:
        seen = {}
        for r in self.relations:
            seen.setdefault(r.entity, r.entity)
            seen.setdefault(r.role, r.role)
        return sorted(seen.values(), key=EntityRef.order_key)

    @property
    def labels(self) -> dict[str, str]:
        return {ref.curie: ref.label for ref in self.refs}


def normalize_term(
    surface: str, lexicon: Lexicon, kind: TermKind, min_length: int = 2
) -> EntityRef:
    """Ground a surface form to ChEBI, or to an (unnumbered) CEAR ref."""
    key = normalize_surface(surface)
    if len(key) < min_length:
        raise TooShort(f"{surface!r} is shorter than {min_length} characters")
    entry = lexicon.entries.get(key)
    if entry is not None and entry.kind == kind:
        return EntityRef(kind, "chebi", entry.term_id, lexicon.labels.get(entry.term_id, surface))
    return EntityRef(kind, "cear", key, surface.strip())


def assign_cear_ids(keys: Iterable[str], kind: TermKind) -> dict[str, str]:
    prefix = "chem" if kind == TermKind.CHEMICAL else "role"
    return {k: f"{prefix}_{i}" for i, k in enumerate(sorted(set(keys)), 1)}


# -- aggregation --------------------------------------------------------------

def _partial(records, chem_lexicon, role_lexicon, min_length):
    groups: dict[tuple[EntityRef, EntityRef], set[TextLocation]] = defaultdict(set)
    # CEAR display label: surface seen at the smallest location
    first_seen: dict[EntityRef, tuple] = {}
    dropped = 0
    for rec in records:
        if rec.verdict != Verdict.CONFIRMED:
            continue
        try:
            chem = normalize_term(rec.pair.chemical_surface, chem_lexicon, TermKind.CHEMICAL, min_length)
            role = normalize_term(rec.pair.role_surface, role_lexicon, TermKind.ROLE, min_length)
        except TooShort:
            dropped += 1
            continue
        loc = rec.pair.location
        groups[(chem, role)].add(loc)
        for ref in (chem, role):
            if not ref.is_chebi:
                cand = (loc, ref.label)
                if ref not in first_seen or cand < first_seen[ref]:
                    first_seen[ref] = cand
    return groups, first_seen, dropped


def _merge(partials):
    groups: dict[tuple[EntityRef, EntityRef], set[TextLocation]] = defaultdict(set)
    first_seen: dict[EntityRef, tuple] = {}
    dropped = 0
    for g, f, d in partials:
        for k, locs in g.items():
            groups[k] |= locs
        for ref, cand in f.items():
            if ref not in first_seen or cand < first_seen[ref]:
                first_seen[ref] = cand
        dropped += d
    return groups, first_seen, dropped


def aggregate(
    records: Sequence[VerdictRecord],
    chem_lexicon: Lexicon,
    role_lexicon: Lexicon | None = None,
    min_length: int = 2,
    jobs: int = 1,
) -> list[Relation]:
    """Group confirmed records into relations with distinct supporting locations.

    Partial aggregation over ``jobs`` chunks is merged deterministically, so
    the output does not depend on the worker count.
    """
    role_lexicon = role_lexicon if role_lexicon is not None else chem_lexicon
    records = list(records)
    if jobs > 1 and len(records) > 1:
        size = -(-len(records) // jobs)
        chunks = [records[i:i + size] for i in range(0, len(records), size)]
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            partials = list(pool.map(lambda c: _partial(c, chem_lexicon, role_lexicon, min_length), chunks))
    else:
        partials = [_partial(records, chem_lexicon, role_lexicon, min_length)]
    groups, first_seen, _ = _merge(partials)

    ids = {}
    for kind in (TermKind.CHEMICAL, TermKind.ROLE):
        keys = {ref.key for pair in groups for ref in pair if not ref.is_chebi and ref.kind == kind}
        for key, name in assign_cear_ids(keys, kind).items():
            ids[(kind, key)] = name

    def finish(ref: EntityRef) -> EntityRef:
        if ref.is_chebi:
            return ref
        return EntityRef(ref.kind, "cear", ref.key, first_seen[ref][1], ids[(ref.kind, ref.key)])

    relations = [
        Relation(finish(chem), finish(role), tuple(sorted(locs)))
        for (chem, role), locs in groups.items()
    ]
    relations.sort(key=lambda r: (-r.count, r.entity.label, r.role.label, r.entity.order_key(), r.role.order_key()))
    return relations


def apply_min_ref(relations: Sequence[Relation], min_ref: int) -> KnowledgeGraph:
    if min_ref < 1:
        raise ValueError("min_ref must be >= 1")
    return KnowledgeGraph([r for r in relations if r.count >= min_ref], min_ref)


# -- serialization ------------------------------------------------------------

_ECHAR = {"\\": "\\\\", '"': '\\"', "\n": "\\n", "\r": "\\r", "\t": "\\t", "\b": "\\b", "\f": "\\f"}


def turtle_string(s: str) -> str:
    out = []
    for c in s:
        if c in _ECHAR:
            out.append(_ECHAR[c])
        elif ord(c) < 0x20 or ord(c) == 0x7F:
            out.append(f"\\u{ord(c):04X}")
        else:
            out.append(c)
    return '"' + "".join(out) + '"'


def _blocks(kg: KnowledgeGraph) -> list[list[str]]:
    outgoing: dict[EntityRef, list[Relation]] = defaultdict(list)
    for r in kg.relations:
        outgoing[r.entity].append(r)
    blocks = []
    for ref in kg.refs:
        lines = [
            f"{ref.curie} rdf:type {ref.type_curie} .",
            f"{ref.curie} rdfs:label {turtle_string(ref.label)} .",
        ]
        for r in sorted(outgoing.get(ref, ()), key=lambda r: r.role.order_key()):
            lines.append(f"{ref.curie} {HAS_ROLE} {r.role.curie} .")
        blocks.append(lines)
    return blocks


def emit_turtle(kg: KnowledgeGraph) -> str:
    out = PREFIXES
    for block in _blocks(kg):
        out += "\n" + "\n".join(block) + "\n"
    return out


def emit_rdf_star(kg: KnowledgeGraph) -> str:
    """Turtle plus one quoted-triple annotation per supporting location."""
    out = emit_turtle(kg)
    relations = sorted(kg.relations, key=lambda r: (r.entity.order_key(), r.role.order_key()))
    for r in relations:
        out += "\n"
        triple = f"<< {r.entity.curie} {HAS_ROLE} {r.role.curie} >>"
        for loc in r.locations:
            out += (
                f"{triple} cear:source [ cear:doc {turtle_string(loc.doc_checksum)} ; "
                f"cear:page {loc.page} ; cear:offset {loc.offset} ] .\n"
            )
    return out


def _layout(kg: KnowledgeGraph) -> dict[str, tuple[float, float]]:
    import networkx as nx

    g = nx.Graph()
    for ref in kg.refs:
        g.add_node(ref.curie)
    for r in kg.relations:
        g.add_edge(r.entity.curie, r.role.curie)
    if not len(g):
        return {}
    pos = nx.spring_layout(g, seed=7, iterations=100)
    return {n: (round(float(x), 4), round(float(y), 4)) for n, (x, y) in sorted(pos.items())}


def _edge_grey(count: int, lo: int, hi: int) -> str:
    # light grey for the weakest relation, black for the strongest
    t = 1.0 if hi == lo else (count - lo) / (hi - lo)
    v = round(211 * (1 - t))
    return f"#{v:02X}{v:02X}{v:02X}"


def emit_html(kg: KnowledgeGraph, title: str = "Chemical entities and roles") -> str:
    """Self-contained HTML page with an inline SVG rendering of the graph."""
    size, pad = 900, 60
    pos = _layout(kg)
    xs = [p[0] for p in pos.values()] or [0.0]
    ys = [p[1] for p in pos.values()] or [0.0]

    def scale(v, lo, hi):
        return pad + (size - 2 * pad) * (0.5 if hi == lo else (v - lo) / (hi - lo))

    xy = {n: (round(scale(x, min(xs), max(xs)), 1), round(scale(y, min(ys), max(ys)), 1)) for n, (x, y) in pos.items()}
    counts = [r.count for r in kg.relations]
    lo, hi = (min(counts), max(counts)) if counts else (0, 0)

    nodes = [
        {"id": ref.curie, "label": ref.label, "kind": ref.kind.value, "source": ref.source,
         "color": COLORS[(ref.source, ref.kind)]}
        for ref in kg.refs
    ]
    edges = [
        {"source": r.entity.curie, "target": r.role.curie, "count": r.count,
         "color": _edge_grey(r.count, lo, hi)}
        for r in sorted(kg.relations, key=lambda r: (r.entity.order_key(), r.role.order_key()))
    ]

    svg = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">']
    for e in edges:
        (x1, y1), (x2, y2) = xy[e["source"]], xy[e["target"]]
        svg.append(f'<line x1="{x1}" y1="{y1}" x2="{x2}" y2="{y2}" stroke="{e["color"]}" stroke-width="2"/>')
        svg.append(
            f'<text class="edge" x="{round((x1 + x2) / 2, 1)}" y="{round((y1 + y2) / 2, 1)}">{e["count"]}</text>'
        )
    for n in nodes:
        x, y = xy[n["id"]]
        svg.append(
            f'<g class="node"><title>{html.escape(n["id"])}</title>'
            f'<circle cx="{x}" cy="{y}" r="9" fill="{n["color"]}"/>'
            f'<text x="{x + 12}" y="{y + 4}">{html.escape(n["label"])}</text></g>'
        )
    svg.append("</svg>")

    data = json.dumps({"min_ref": kg.min_ref, "nodes": nodes, "edges": edges}, ensure_ascii=False, sort_keys=True)
    data = data.replace("</", "<\\/")
    legend = "".join(
        f'<span><i style="background:{c}"></i>{html.escape(t)}</span>'
        for c, t in [
            (COLORS[("chebi", TermKind.CHEMICAL)], "chemical entity (ChEBI)"),
            (COLORS[("cear", TermKind.CHEMICAL)], "chemical entity (CEAR)"),
            (COLORS[("chebi", TermKind.ROLE)], "role (ChEBI)"),
            (COLORS[("cear", TermKind.ROLE)], "role (CEAR)"),
        ]
    )
    return (
        "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n"
        f"<title>{html.escape(title)}</title>\n"
        "<style>\nbody{font-family:sans-serif}\n.node text{font-size:12px}\n"
        ".edge{font-size:10px;fill:#555}\n.legend span{margin-right:1em}\n"
        ".legend i{display:inline-block;width:12px;height:12px;margin-right:4px;border-radius:6px}\n</style>\n"
        "</head>\n<body>\n"
        f"<h1>{html.escape(title)}</h1>\n"
        f"<p>minRef = {kg.min_ref}; {len(nodes)} nodes, {len(edges)} relations</p>\n"
        f'<div class="legend">{legend}</div>\n'
        + "\n".join(svg)
        + f'\n<script type="application/json" id="graph-data">{data}</script>\n'
        "</body>\n</html>\n"
    )


# -- statistics ---------------------------------------------------------------

def stats_row(relations: Iterable[Relation]) -> dict[str, int]:
    relations = list(relations)
    chem = {r.entity for r in relations}
    roles = {r.role for r in relations}
    return {
        STATS_ROWS[0]: len(relations),
        STATS_ROWS[1]: sum(r.count for r in relations),
        STATS_ROWS[2]: sum(1 for e in chem if e.is_chebi),
        STATS_ROWS[3]: sum(1 for e in chem if not e.is_chebi),
        STATS_ROWS[4]: sum(1 for e in roles if e.is_chebi),
        STATS_ROWS[5]: sum(1 for e in roles if not e.is_chebi),
    }


def stats(relations: Sequence[Relation], min_refs: Sequence[int] = DEFAULT_STATS_MIN_REFS) -> dict[int, dict[str, int]]:
    return {m: stats_row(apply_min_ref(relations, m).relations) for m in min_refs}


def format_stats(table: dict[int, dict[str, int]]) -> str:
    cols = list(table)
    width = max(len(r) for r in STATS_ROWS)
    lines = [" " * width + "".join(f"{c:>10d}" for c in cols)]
    for row in STATS_ROWS:
        lines.append(f"{row:<{width}s}" + "".join(f"{table[c][row]:>10,d}" for c in cols))
    return "\n".join(lines) + "\n"


def stats_json(table: dict[int, dict[str, int]]) -> str:
    return json.dumps({str(k): v for k, v in table.items()}, indent=1) + "\n"


def rank_relations(relations: Sequence[Relation], k: int = 10) -> dict[str, list[dict]]:
    def row(r: Relation) -> dict:
        return {
            "entity": r.entity.label,
            "entity_source": "ChEBI" if r.entity.is_chebi else "CEAR",
            "role": r.role.label,
            "role_source": "ChEBI" if r.role.is_chebi else "CEAR",
            "count": r.count,
        }

    most = sorted(relations, key=lambda r: (-r.count, r.entity.label, r.role.label))[:k]
    least = sorted(relations, key=lambda r: (r.count, r.entity.label, r.role.label))[:k]
    return {"most": [row(r) for r in most], "least": [row(r) for r in least]}


def format_ranking(ranking: dict[str, list[dict]]) -> str:
    lines = []
    for side in ("most", "least"):
        lines.append(f"{side} frequent relations")
        for r in ranking[side]:
            lines.append(
                f"  {r['entity']} [{r['entity_source']}]  has role  {r['role']} [{r['role_source']}]  {r['count']:,d}"
            )
    return "\n".join(lines) + "\n"
