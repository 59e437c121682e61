import json
from pathlib import Path

import pytest

from chemrolekg.cli import main
from chemrolekg.kg import STATS_ROWS
from chemrolekg.pipeline import ConfigError, PipelineConfig, run_pipeline

import synth


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("synth")
    docs = synth.make_corpus(n_docs=12, seed=5)
    synth.write_corpus(docs, d / "corpus")
    synth.write_external(docs, d / "ext")
    (d / "mini.obo").write_text(synth.mini_obo(), encoding="utf-8")
    return d, docs


def _cfg(base: Path, root: Path, **kw):
    values = dict(store=str(root / "store"), obo=str(base / "mini.obo"), input=str(base / "corpus"),
                  work_dir=str(root / "work"), out_dir=str(root / "out"), external_dir=str(base / "ext"),
                  chemical_min_length=3, min_ref=1)
    values.update(kw)
    return PipelineConfig(**values)


def test_counts_match_generator(corpus_dir, tmp_path):
    base, docs = corpus_dir
    report = run_pipeline(_cfg(base, tmp_path))
    want = synth.expected_counts(docs)
    got = report.counts
    for key in ("documents", "mentions", "candidate_sentences", "pairs", "confirmed", "rejected",
                "ambiguous", "relations_before_min_ref"):
        assert got[key] == want[key], key
    assert got["validated_pairs"] == got["pairs"]
    assert got["confirmed"] + got["rejected"] + got["ambiguous"] + got["transport_failures"] == got["pairs"]
    table = json.loads((tmp_path / "out" / "stats.json").read_text())
    assert table["1"][STATS_ROWS[1]] == sum(len(v) for v in want["relation_counts"].values())


def test_rerun_skips_every_stage(corpus_dir, tmp_path):
    base, _ = corpus_dir
    cfg = _cfg(base, tmp_path)
    run_pipeline(cfg)
    ttl = (tmp_path / "out" / "kg.ttl").read_bytes()
    again = run_pipeline(cfg)
    assert all(s.skipped for s in again.stages)
    assert (tmp_path / "out" / "kg.ttl").read_bytes() == ttl


def test_changed_min_ref_reruns_only_build(corpus_dir, tmp_path):
    base, _ = corpus_dir
    run_pipeline(_cfg(base, tmp_path))
    rep = run_pipeline(_cfg(base, tmp_path, min_ref=3))
    assert [s.name for s in rep.stages if not s.skipped] == ["build"]
    assert rep.counts["relations_after_min_ref"] <= rep.counts["relations_before_min_ref"]


def test_empty_store_yields_prefix_only_graph(tmp_path):
    (tmp_path / "mini.obo").write_text(synth.mini_obo(), encoding="utf-8")
    cfg = PipelineConfig(store=str(tmp_path / "store"), obo=str(tmp_path / "mini.obo"),
                         work_dir=str(tmp_path / "work"), out_dir=str(tmp_path / "out"))
    rep = run_pipeline(cfg)
    assert rep.counts["documents"] == 0 and rep.counts["pairs"] == 0
    ttl = (tmp_path / "out" / "kg.ttl").read_text()
    assert ttl.count("@prefix") == 4 and "rdf:type" not in ttl


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        PipelineConfig(obo=str(tmp_path / "missing.obo")).validate()
    (tmp_path / "c.toml").write_text('bogus = 1\n')
    with pytest.raises(ConfigError):
        PipelineConfig.load(tmp_path / "c.toml")


def test_config_file_relative_paths_and_overrides(tmp_path):
    (tmp_path / "c.toml").write_text('obo = "mini.obo"\nmin_ref = 5\nrdf_star = true\n')
    cfg = PipelineConfig.load(tmp_path / "c.toml", min_ref=7)
    assert cfg.obo == str(tmp_path / "mini.obo") and cfg.min_ref == 7 and cfg.rdf_star


def test_cli_run_with_config(corpus_dir, tmp_path, capsys):
    base, _ = corpus_dir
    cfg = tmp_path / "run.toml"
    cfg.write_text(
        f'store = "store"\nobo = "{base / "mini.obo"}"\ninput = "{base / "corpus"}"\n'
        f'external_dir = "{base / "ext"}"\nchemical_min_length = 3\n'
    )
    assert main(["run", "--config", str(cfg), "--min-ref", "1", "--rdf-star"]) == 0
    out = capsys.readouterr().out
    assert "relations_after_min_ref" in out
    assert (tmp_path / "out" / "kg.star.ttl").exists() and (tmp_path / "out" / "kg.html").exists()


def test_cli_stage_by_stage(corpus_dir, tmp_path, capsys):
    base, docs = corpus_dir
    store, work = tmp_path / "store", tmp_path / "w"
    assert main(["ingest", "--in", str(base / "corpus"), "--store", str(store)]) == 0
    assert main(["ingest", "--in", str(base / "corpus"), "--store", str(store)]) == 0
    assert f"0 added, {len(docs)} documents" in capsys.readouterr().out.splitlines()[-1]

    work.mkdir()
    assert main(["lexicon", "--obo", str(base / "mini.obo"), "--kind", "both", "--min-len", "3",
                 "--out", str(work / "lex.json")]) == 0
    assert main(["annotate", "--store", str(store), "--lexicon", str(work / "lex.json"),
                 "--external", str(base / "ext"), "--out", str(work / "ann")]) == 0
    assert main(["candidates", "--store", str(store), "--ann", str(work / "ann"),
                 "--out", str(work / "pairs.jsonl")]) == 0
    want = synth.expected_counts(docs)
    assert len((work / "pairs.jsonl").read_text().splitlines()) == want["pairs"]

    args = ["validate", "--pairs", str(work / "pairs.jsonl"), "--cache", str(work / "v.jsonl"), "--stub", "--jobs", "2"]
    assert main(args) == 0
    capsys.readouterr()
    assert main(args) == 0
    assert "client calls: 0" in capsys.readouterr().out
    assert main(["compact", "--cache", str(work / "v.jsonl")]) == 0
    assert "dropped 0" in capsys.readouterr().out

    assert main(["build", "--cache", str(work / "v.jsonl"), "--obo", str(base / "mini.obo"), "--min-ref", "1",
                 "--out", str(work / "kg.ttl"), "--rdf-star", "--html", str(work / "kg.html"), "--stats"]) == 0
    out = capsys.readouterr().out
    assert f"relations_before_min_ref={want['relations_before_min_ref']}" in out
    assert "number of relevant text positions" in out
    assert (work / "kg.star.ttl").exists() and (work / "kg.stats.json").exists()


def test_cli_eval(tmp_path, capsys):
    from chemrolekg.corpus import DocumentStore, ingest_document

    store = DocumentStore(tmp_path / "s")
    cs = ingest_document([(1, "PBS is a buffer.")], "x", store).checksum
    for name, ms in [("gold", [(0, 3, "chemical"), (9, 15, "role")]), ("pred", [(0, 3, "chemical"), (4, 6, "role")])]:
        (tmp_path / name).mkdir()
        (tmp_path / name / "a.json").write_text(json.dumps({"doc_checksum": cs, "mentions": [
            {"page": 1, "start": s, "end": e, "kind": k} for s, e, k in ms]}))
    assert main(["eval", "--gold", str(tmp_path / "gold"), "--pred", str(tmp_path / "pred"),
                 "--store", str(tmp_path / "s"), "--json", str(tmp_path / "r.json")]) == 0
    res = json.loads((tmp_path / "r.json").read_text())
    assert res["metrics"]["overall"]["tp"] == 1 and res["false_positives"] == [["is", 1]]
    assert "overall" in capsys.readouterr().out


def test_cli_errors_exit_nonzero(tmp_path, capsys):
    assert main(["lexicon", "--obo", str(tmp_path / "nope.obo"), "--out", str(tmp_path / "x.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"checksum": "0" * 64, "pages": [{"number": 1, "text": "x"}]}))
    assert main(["ingest", "--in", str(bad), "--store", str(tmp_path / "s")]) == 2
    assert "error:" in capsys.readouterr().err
