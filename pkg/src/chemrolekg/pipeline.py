"""End-to-end run: ingest -> lexicon -> annotate -> candidates -> validate -> build.

Every stage writes plain files under ``work_dir``. A stage is skipped when
the digest of its inputs and parameters matches the one recorded by the
previous run and its outputs still exist.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
import shutil
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import annotate as ann
from . import candidates as cand
from . import corpus, kg
from .ontology import Lexicon, TermKind, build_lexicon, classify, load_obo
from .validate import (
    HttpChatClient,
    PromptTemplate,
    SamplingConfig,
    StubClient,
    VerdictCache,
    VerdictRecord,
    cache_key,
    validate_pairs,
)

logger = logging.getLogger(__name__)

STAGES = ("ingest", "lexicon", "annotate", "candidates", "validate", "build")


class ConfigError(ValueError):
    pass


class StageFailed(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class PipelineConfig:
    store: str = "store"
    obo: str = ""
    input: str = ""
    work_dir: str = "work"
    out_dir: str = "out"
    external_dir: str = ""
    lexicon_kind: str = "both"
    role_min_length: int = 4
    chemical_min_length: int = 4
    norm_min_length: int = 2
    min_ref: int = 2
    validator: str = "stub"
    endpoint: str = ""
    model: str = SamplingConfig.model_name
    temperature: float = 0.1
    top_p: float = 0.95
    system_prompt_file: str = ""
    user_prompt_file: str = ""
    max_in_flight: int = 4
    jobs: int = 1
    rdf_star: bool = False
    html: bool = True
    stats_min_refs: list[int] = field(default_factory=lambda: list(kg.DEFAULT_STATS_MIN_REFS))

    def validate(self) -> "PipelineConfig":
        if not self.obo or not Path(self.obo).is_file():
            raise ConfigError(f"obo file not found: {self.obo!r}")
        if self.input and not Path(self.input).exists():
            raise ConfigError(f"input not found: {self.input!r}")
        if self.external_dir and not Path(self.external_dir).is_dir():
            raise ConfigError(f"external annotation dir not found: {self.external_dir!r}")
        if self.lexicon_kind not in ("role", "chemical", "both"):
            raise ConfigError("lexicon_kind must be role, chemical or both")
        if self.validator not in ("stub", "http"):
            raise ConfigError("validator must be 'stub' or 'http'")
        if self.validator == "http" and not (self.endpoint or os.environ.get("CEAR_LLM_ENDPOINT")):
            raise ConfigError("http validator needs an endpoint")
        for name in ("role_min_length", "chemical_min_length", "norm_min_length", "min_ref", "jobs", "max_in_flight"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")
        SamplingConfig(self.temperature, self.top_p)
        return self

    @classmethod
    def load(cls, path: str | os.PathLike | None = None, **overrides) -> "PipelineConfig":
        values: dict[str, Any] = {}
        base = Path(".")
        if path:
            with open(path, "rb") as fh:
                values = tomllib.load(fh)
            base = Path(path).resolve().parent
            unknown = set(values) - {f.name for f in dataclasses.fields(cls)}
            if unknown:
                raise ConfigError(f"unknown config keys: {sorted(unknown)}")
            # relative paths in a config file (and the default dirs) are relative to the file
            defaults = {f.name: f.default for f in dataclasses.fields(cls)}
            for key in ("store", "obo", "input", "work_dir", "out_dir", "external_dir",
                        "system_prompt_file", "user_prompt_file"):
                value = values.get(key, defaults[key])
                if value and not os.path.isabs(value):
                    values[key] = str(base / value)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


@dataclass
class StageResult:
    name: str
    skipped: bool
    counts: dict[str, int]


@dataclass
class PipelineReport:
    stages: list[StageResult] = field(default_factory=list)

    @property
    def counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for s in self.stages:
            out.update(s.counts)
        return out

    def format(self) -> str:
        lines = []
        for s in self.stages:
            status = "skipped (up-to-date)" if s.skipped else "done"
            detail = ", ".join(f"{k}={v}" for k, v in s.counts.items())
            lines.append(f"{s.name:<11s} {status:<21s} {detail}")
        return "\n".join(lines)


def _digest(*parts: Any) -> str:
    h = hashlib.sha256()
    for part in parts:
        if isinstance(part, Path):
            if part.is_dir():
                for p in sorted(part.rglob("*")):
                    if p.is_file():
                        h.update(str(p.relative_to(part)).encode())
                        h.update(p.read_bytes())
            elif part.exists():
                h.update(part.read_bytes())
            else:
                h.update(b"<missing>")
        else:
            h.update(json.dumps(part, sort_keys=True, default=str).encode())
        h.update(b"\x00")
    return h.hexdigest()


class _Stamps:
    def __init__(self, path: Path):
        self.path = path
        self.data = json.loads(path.read_text()) if path.exists() else {}

    def fresh(self, stage: str, digest: str, outputs: list[Path]) -> dict | None:
        entry = self.data.get(stage)
        if entry and entry["digest"] == digest and all(p.exists() for p in outputs):
            return entry["counts"]
        return None

    def record(self, stage: str, digest: str, counts: dict) -> None:
        self.data[stage] = {"digest": digest, "counts": counts}
        self.path.write_text(json.dumps(self.data, indent=1))


def _annotation_lexicon(cfg: PipelineConfig, onto) -> Lexicon:
    kinds = classify(onto)
    include = {"role": [TermKind.ROLE], "chemical": [TermKind.CHEMICAL],
               "both": [TermKind.CHEMICAL, TermKind.ROLE]}[cfg.lexicon_kind]
    return build_lexicon(onto, kinds, include,
                         {TermKind.ROLE: cfg.role_min_length, TermKind.CHEMICAL: cfg.chemical_min_length})


def annotate_store(store: corpus.DocumentStore, lexicon: Lexicon, out_dir: Path,
                   external_dir: str | os.PathLike | None = None) -> dict[str, int]:
    """Write one merged standoff file per stored document."""
    external: dict[str, list[ann.Mention]] = {}
    if external_dir:
        for p in sorted(Path(external_dir).glob("*.json")):
            doc = ann.load_standoff(p, store)
            external.setdefault(doc.doc_checksum, []).extend(doc.mentions)
    if out_dir.exists():
        shutil.rmtree(out_dir)
    out_dir.mkdir(parents=True)
    n_docs = n_mentions = 0
    for doc in store:
        found = ann.annotate_document(doc, lexicon).mentions
        merged = ann.merge_annotations(found, external.get(doc.checksum, []))
        ann.dump_standoff(ann.AnnotatedDocument(doc.checksum, merged, ann.Provenance.EXTERNAL),
                          out_dir / f"{doc.checksum}.json")
        n_docs += 1
        n_mentions += len(merged)
    return {"annotated_documents": n_docs, "mentions": n_mentions}


def candidates_from_dir(store: corpus.DocumentStore, ann_dir: Path):
    sentences = []
    for p in sorted(ann_dir.glob("*.json")):
        sentences.extend(cand.extract_candidates(ann.load_standoff(p, store), store))
    return sentences


def run_pipeline(cfg: PipelineConfig, echo: Callable[[str], None] | None = None) -> PipelineReport:
    cfg.validate()
    work, out = Path(cfg.work_dir), Path(cfg.out_dir)
    work.mkdir(parents=True, exist_ok=True)
    out.mkdir(parents=True, exist_ok=True)
    store = corpus.DocumentStore(cfg.store)
    stamps = _Stamps(work / "stamps.json")
    report = PipelineReport()

    lexicon_path = work / "lexicon.json"
    ann_dir = work / "annotations"
    pairs_path = work / "pairs.jsonl"
    cache_path = work / "verdicts.jsonl"
    ttl_path = out / "kg.ttl"
    outputs_build = [ttl_path, out / "stats.txt", out / "stats.json"]
    if cfg.html:
        outputs_build.append(out / "kg.html")
    if cfg.rdf_star:
        outputs_build.append(out / "kg.star.ttl")

    tmpl = PromptTemplate.from_files(cfg.system_prompt_file or None, cfg.user_prompt_file or None)
    validator_id = "stub" if cfg.validator == "stub" else cfg.model

    def stage(name: str, digest: str, outputs: list[Path], body: Callable[[], dict],
              settled: Callable[[], str] | None = None):
        cached = stamps.fresh(name, digest, outputs)
        if cached is not None:
            result = StageResult(name, True, cached)
        else:
            try:
                counts = body()
            except Exception as exc:
                raise StageFailed(name, exc) from exc
            # a stage that mutates its own input records the state it leaves behind
            stamps.record(name, settled() if settled else digest, counts)
            result = StageResult(name, False, counts)
        report.stages.append(result)
        if echo:
            echo(report.format().splitlines()[-1])

    def do_ingest():
        added = dup = 0
        if cfg.input:
            for f in corpus.iter_document_files(cfg.input):
                res = corpus.ingest_file(f, store)
                if isinstance(res, corpus.Added):
                    added += 1
                else:
                    dup += 1
        return {"added": added, "duplicates": dup, "documents": len(store)}

    ingest_inputs = [Path(cfg.input)] if cfg.input else []
    stage("ingest", _digest(*ingest_inputs, store.checksums()), [store.root], do_ingest,
          settled=lambda: _digest(*ingest_inputs, store.checksums()))

    def do_lexicon():
        lex = _annotation_lexicon(cfg, load_obo(cfg.obo))
        lex.dump(lexicon_path)
        return {"lexicon_entries": len(lex), "lexicon_diagnostics": len(lex.diagnostics)}

    stage("lexicon",
          _digest(Path(cfg.obo), cfg.lexicon_kind, cfg.role_min_length, cfg.chemical_min_length),
          [lexicon_path], do_lexicon)

    def do_annotate():
        return annotate_store(store, Lexicon.load(lexicon_path), ann_dir, cfg.external_dir or None)

    stage("annotate",
          _digest(store.checksums(), lexicon_path, Path(cfg.external_dir) if cfg.external_dir else ""),
          [ann_dir], do_annotate)

    def do_candidates():
        sentences = candidates_from_dir(store, ann_dir)
        n_pairs = cand.write_pairs(cand.iter_pairs(sentences), pairs_path)
        expected = sum(len(cand._distinct(c.chemicals)) * len(cand._distinct(c.roles)) for c in sentences)
        if n_pairs != expected:
            raise RuntimeError(f"pair accounting broken: wrote {n_pairs}, expected {expected}")
        return {"candidate_sentences": len(sentences), "pairs": n_pairs}

    stage("candidates", _digest(ann_dir), [pairs_path], do_candidates)

    def do_validate():
        pairs = cand.read_pairs(pairs_path)
        cache_path.touch()
        cache = VerdictCache(cache_path)
        if cfg.validator == "stub":
            client = StubClient()
        else:
            client = HttpChatClient(cfg.endpoint or None, cfg.model)
        sampling = SamplingConfig(cfg.temperature, cfg.top_p, cfg.model, cfg.endpoint)
        result = validate_pairs(pairs, client, cache, tmpl, sampling, cfg.max_in_flight)
        counts = result.summary
        counts["validated_pairs"] = counts.pop("pairs")
        return counts

    stage("validate",
          _digest(pairs_path, validator_id, tmpl.digest, cfg.temperature, cfg.top_p),
          [cache_path], do_validate)

    def do_build():
        pairs = cand.read_pairs(pairs_path)
        cache = VerdictCache(cache_path)
        records: list[VerdictRecord] = []
        for p in pairs:
            rec = cache.get(cache_key(p, validator_id, tmpl.digest))
            if rec is not None:
                records.append(rec)
        return build_outputs(records, cfg.obo, cfg.min_ref, ttl_path, cfg.norm_min_length, cfg.jobs,
                             cfg.rdf_star, out / "kg.html" if cfg.html else None,
                             cfg.stats_min_refs, out / "stats")

    stage("build",
          _digest(pairs_path, cache_path, Path(cfg.obo), cfg.min_ref, cfg.norm_min_length,
                  cfg.rdf_star, cfg.html, cfg.stats_min_refs, validator_id, tmpl.digest),
          outputs_build, do_build)
    return report


def build_outputs(records, obo_path, min_ref: int, ttl_path: Path, min_length: int = 2, jobs: int = 1,
                  rdf_star: bool = False, html_path: Path | None = None,
                  stats_min_refs=kg.DEFAULT_STATS_MIN_REFS, stats_base: Path | None = None) -> dict[str, int]:
    """Fit the KG builder on ``records`` and write Turtle plus optional extras.

    ``stats_base`` gets ``.txt`` (aligned table and frequency ranking) and
    ``.json`` suffixes. RDF-star goes next to the Turtle file as ``*.star.ttl``.
    """
    from .estimators import KnowledgeGraphBuilder

    ttl_path = Path(ttl_path)
    ttl_path.parent.mkdir(parents=True, exist_ok=True)
    builder = KnowledgeGraphBuilder(load_obo(obo_path), min_ref=min_ref, min_length=min_length, jobs=jobs)
    builder.fit(records)
    ttl_path.write_text(builder.to_turtle(), encoding="utf-8")
    if rdf_star:
        ttl_path.with_suffix(".star.ttl").write_text(builder.to_rdf_star(), encoding="utf-8")
    if html_path:
        Path(html_path).write_text(builder.to_html(), encoding="utf-8")
    if stats_base:
        table = builder.stats(stats_min_refs)
        ranking = kg.format_ranking(kg.rank_relations(builder.relations_))
        Path(f"{stats_base}.txt").write_text(kg.format_stats(table) + "\n" + ranking, encoding="utf-8")
        Path(f"{stats_base}.json").write_text(kg.stats_json(table), encoding="utf-8")
    return {
        "confirmed_records": sum(1 for r in records if r.verdict.value == "confirmed"),
        "relations_before_min_ref": len(builder.relations_),
        "relations_after_min_ref": len(builder.graph_.relations),
    }
