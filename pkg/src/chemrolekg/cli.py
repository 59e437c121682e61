"""Command line entry point: one subcommand per pipeline stage plus ``run``."""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import annotate as ann
from . import candidates as cand
from . import corpus, kg, ner_eval
from .ontology import Lexicon, TermKind, build_lexicon, classify, load_obo
from .pipeline import PipelineConfig, StageFailed, annotate_store, build_outputs, run_pipeline
from .validate import (
    HttpChatClient,
    PromptTemplate,
    SamplingConfig,
    StubClient,
    VerdictCache,
    validate_pairs,
)

log = logging.getLogger("chemrolekg")


def cmd_ingest(args) -> int:
    store = corpus.DocumentStore(args.store)
    added = 0
    for path in corpus.iter_document_files(args.input):
        res = corpus.ingest_file(path, store)
        if isinstance(res, corpus.Added):
            added += 1
            print(f"Added {res.checksum} {path}")
        else:
            print(f"Duplicate {res.checksum} {path}")
    print(f"{added} added, {len(store)} documents in store")
    return 0


_KINDS = {"role": [TermKind.ROLE], "chemical": [TermKind.CHEMICAL], "both": [TermKind.CHEMICAL, TermKind.ROLE]}


def cmd_lexicon(args) -> int:
    onto = load_obo(args.obo)
    kinds = classify(onto)
    lex = build_lexicon(onto, kinds, _KINDS[args.kind], args.min_len)
    lex.dump(args.out)
    counts = {k.value: sum(1 for v in kinds.values() if v == k) for k in TermKind}
    print(f"{len(onto)} terms: " + ", ".join(f"{k}={v}" for k, v in counts.items()))
    for d in onto.diagnostics + lex.diagnostics:
        print(d)
    print(f"{len(lex)} entries (min length {args.min_len}) -> {args.out}")
    return 0


def cmd_annotate(args) -> int:
    store = corpus.DocumentStore(args.store)
    counts = annotate_store(store, Lexicon.load(args.lexicon), Path(args.out), args.external)
    print(", ".join(f"{k}={v}" for k, v in counts.items()))
    return 0


def _load_mentions(directory: str, store: corpus.DocumentStore | None) -> list[ann.Mention]:
    mentions = []
    for p in sorted(Path(directory).glob("*.json")):
        if store is not None:
            mentions.extend(ann.load_standoff(p, store).mentions)
            continue
        raw = json.loads(p.read_text(encoding="utf-8"))
        prov = ann.Provenance(raw.get("provenance", "external"))
        mentions.extend(
            ann.Mention(raw["doc_checksum"], m["page"], m["start"], m["end"], TermKind(m["kind"]),
                        m.get("surface", ""), prov)
            for m in raw["mentions"]
        )
    return mentions


def cmd_eval(args) -> int:
    store = corpus.DocumentStore(args.store) if args.store else None
    gold = _load_mentions(args.gold, store)
    pred = _load_mentions(args.pred, store)
    metrics = ner_eval.score_strict(gold, pred)
    table = ner_eval.error_table(gold, pred, args.top_k)
    print(ner_eval.format_metrics(metrics))
    print()
    print(ner_eval.format_error_table(table))
    payload = {
        "metrics": metrics.as_dict(),
        "false_positives": table.false_positives,
        "false_negatives": table.false_negatives,
    }
    if args.json:
        Path(args.json).write_text(json.dumps(payload, indent=1), encoding="utf-8")
    else:
        print()
        print(json.dumps(payload))
    return 0


def cmd_candidates(args) -> int:
    store = corpus.DocumentStore(args.store)
    from .pipeline import candidates_from_dir

    sentences = candidates_from_dir(store, Path(args.ann))
    n = cand.write_pairs(cand.iter_pairs(sentences), args.out)
    print(f"{len(sentences)} candidate sentences, {n} pairs -> {args.out}")
    return 0


def cmd_validate(args) -> int:
    pairs = cand.read_pairs(args.pairs)
    tmpl = PromptTemplate.from_files(args.system, args.user)
    cfg = SamplingConfig(args.temperature, args.top_p, args.model or SamplingConfig.model_name, args.endpoint or "")
    if args.stub:
        client = StubClient()
    else:
        client = HttpChatClient(args.endpoint, args.model or SamplingConfig.model_name)
    cache = VerdictCache(args.cache)
    report = validate_pairs(pairs, client, cache, tmpl, cfg, args.jobs)
    print(", ".join(f"{k}={v}" for k, v in report.summary.items()))
    print(f"client calls: {client.calls}")
    return 0 if not report.failures else 3


def cmd_compact(args) -> int:
    dropped = VerdictCache(args.cache).compact()
    print(f"dropped {dropped} duplicate lines")
    return 0


def cmd_build(args) -> int:
    cache = VerdictCache(args.cache)
    records = [r for r in cache if args.validator is None or r.validator_id == args.validator]
    out = Path(args.out)
    stats_refs = [int(x) for x in args.stats.split(",")] if args.stats else None
    counts = build_outputs(
        records, args.obo, args.min_ref, out, args.min_len, args.jobs, args.rdf_star,
        Path(args.html) if args.html else None,
        stats_refs or kg.DEFAULT_STATS_MIN_REFS,
        out.with_suffix(".stats") if stats_refs else None,
    )
    print(", ".join(f"{k}={v}" for k, v in counts.items()))
    if stats_refs:
        print(out.with_suffix(".stats.txt").read_text(encoding="utf-8"), end="")
    return 0


def _add_config_overrides(p: argparse.ArgumentParser) -> None:
    for f in dataclasses.fields(PipelineConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.type in ("bool", bool):
            p.add_argument(flag, dest=f.name, action=argparse.BooleanOptionalAction, default=None)
        elif f.type in ("int", int):
            p.add_argument(flag, dest=f.name, type=int, default=None)
        elif f.type in ("float", float):
            p.add_argument(flag, dest=f.name, type=float, default=None)
        elif f.name == "stats_min_refs":
            p.add_argument(flag, dest=f.name, default=None,
                           type=lambda s: [int(x) for x in s.split(",")])
        else:
            p.add_argument(flag, dest=f.name, default=None)


def cmd_run(args) -> int:
    overrides = {f.name: getattr(args, f.name) for f in dataclasses.fields(PipelineConfig)}
    cfg = PipelineConfig.load(args.config, **overrides)
    try:
        report = run_pipeline(cfg, echo=print)
    except StageFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print()
    for k, v in report.counts.items():
        print(f"{k:>26s}: {v}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chemrolekg", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="add page-wise document JSON files to a store")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--store", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("lexicon", help="compile an OBO ontology into a surface-form lexicon")
    p.add_argument("--obo", required=True)
    p.add_argument("--kind", choices=sorted(_KINDS), default="role")
    p.add_argument("--min-len", type=int, default=4)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_lexicon)

    p = sub.add_parser("annotate", help="gazetteer-annotate stored documents")
    p.add_argument("--store", required=True)
    p.add_argument("--lexicon", required=True)
    p.add_argument("--external", default=None, help="dir of standoff files to merge")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("eval", help="strict-span scoring of predicted against gold standoff files")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--top-k", type=int, default=8)
    p.add_argument("--store", default=None, help="validate spans against this store")
    p.add_argument("--json", default=None, help="write machine-readable results here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("candidates", help="emit (chemical, role) pairs from annotated sentences")
    p.add_argument("--store", required=True)
    p.add_argument("--ann", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_candidates)

    p = sub.add_parser("validate", help="confirm or reject pairs with an LLM (or the offline stub)")
    p.add_argument("--pairs", required=True)
    p.add_argument("--cache", required=True)
    who = p.add_mutually_exclusive_group(required=True)
    who.add_argument("--stub", action="store_true")
    who.add_argument("--endpoint")
    p.add_argument("--model", default=None)
    p.add_argument("--temperature", type=float, default=0.1)
    p.add_argument("--top-p", type=float, default=0.95)
    p.add_argument("--system", default=None, help="file holding the system prompt")
    p.add_argument("--user", default=None, help="file holding the user prompt template")
    p.add_argument("--jobs", type=int, default=4, help="requests in flight")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("compact", help="deduplicate a verdict cache file")
    p.add_argument("--cache", required=True)
    p.set_defaults(func=cmd_compact)

    p = sub.add_parser("build", help="build the knowledge graph from confirmed verdicts")
    p.add_argument("--cache", required=True)
    p.add_argument("--obo", required=True)
    p.add_argument("--min-ref", type=int, default=2)
    p.add_argument("--min-len", type=int, default=2)
    p.add_argument("--out", required=True)
    p.add_argument("--rdf-star", action="store_true")
    p.add_argument("--html", default=None)
    p.add_argument("--stats", nargs="?", const="1,2,5,10,20,50", default=None)
    p.add_argument("--validator", default=None, help="only use records from this validator id")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("run", help="run every stage from a config file")
    p.add_argument("--config", default=None)
    _add_config_overrides(p)
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (corpus.CorpusError, ann.AnnotationError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
