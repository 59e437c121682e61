import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chemrolekg.annotate import Mention, Provenance
from chemrolekg.ner_eval import MixedDocuments, error_table, format_error_table, format_metrics, score_strict
from chemrolekg.ontology import TermKind

from oracles import set_metrics

C, R = TermKind.CHEMICAL, TermKind.ROLE
D = "d" * 64


def m(start, end, kind=C, surface="x", doc=D, page=1):
    return Mention(doc, page, start, end, kind, surface, Provenance.GOLD)


def test_hand_case_two_of_three():
    a, b, c, d = m(0, 3), m(5, 8), m(10, 12), m(20, 25)
    met = score_strict([a, b, c], [a, b, d])
    o = met["overall"]
    assert (o.tp, o.fp, o.fn) == (2, 1, 1)
    for v in (o.precision, o.recall, o.f1):
        assert v == pytest.approx(2 / 3, abs=1e-9)


def test_perfect_and_empty():
    g = [m(0, 3), m(4, 9, R)]
    assert score_strict(g, g)["overall"].f1 == 1.0
    assert score_strict([], [])["overall"].f1 == 0.0
    assert score_strict(g, [])["overall"].recall == 0.0


def test_off_by_one_is_a_miss():
    met = score_strict([m(0, 3)], [m(0, 4)])
    assert (met["chemical"].tp, met["chemical"].fp, met["chemical"].fn) == (0, 1, 1)


def test_kind_must_match():
    met = score_strict([m(0, 3, C)], [m(0, 3, R)])
    assert met["chemical"].fn == 1 and met["role"].fp == 1


def test_duplicates_collapse():
    met = score_strict([m(0, 3)], [m(0, 3), m(0, 3, surface="y")])
    assert (met["overall"].tp, met["overall"].fp) == (1, 0)


def test_mixed_documents_rejected():
    with pytest.raises(MixedDocuments):
        score_strict([m(0, 3)], [m(0, 3, doc="e" * 64)])


def test_error_table_ranking():
    gold = [m(0, 3, surface="DNA"), m(5, 8, surface="DNA"), m(10, 13, surface="RNA")]
    pred = [m(20, 21, surface="b"), m(22, 23, surface="b"), m(30, 33, surface="PBS"), m(10, 13, surface="RNA")]
    t = error_table(gold, pred, k=8)
    assert t.false_positives == [("b", 2), ("PBS", 1)]
    assert t.false_negatives == [("DNA", 2)]
    assert "DNA" in format_error_table(t)
    with pytest.raises(ValueError):
        error_table(gold, pred, 0)


def test_format_metrics_has_rows():
    text = format_metrics(score_strict([m(0, 3)], [m(0, 3)]))
    assert [line.split()[0] for line in text.splitlines()[1:]] == ["chemical", "role", "overall"]


def _random_mentions(rng, n):
    return [m(s, s + rng.randint(1, 3), rng.choice([C, R]), page=rng.randint(1, 2))
            for s in (rng.randint(0, 20) for _ in range(n))]


@pytest.mark.parametrize("seed", range(50))
def test_matches_set_oracle(seed):
    rng = random.Random(seed)
    gold = _random_mentions(rng, rng.randint(0, 30))
    pred = _random_mentions(rng, rng.randint(0, 30))
    met = score_strict(gold, pred)
    g = {(x.doc_checksum, x.page, x.start, x.end, x.kind) for x in gold}
    p = {(x.doc_checksum, x.page, x.start, x.end, x.kind) for x in pred}
    for kind in (C, R):
        want = set_metrics({s for s in g if s[4] == kind}, {s for s in p if s[4] == kind})
        c = met[kind.value]
        assert (c.tp, c.fp, c.fn, c.precision, c.recall, c.f1) == want
    o = met["overall"]
    assert (o.tp, o.fp, o.fn) == set_metrics(g, p)[:3]


_ms = st.lists(st.builds(lambda s, n, k: m(s, s + n, k), st.integers(0, 15), st.integers(1, 4), st.sampled_from([C, R])),
               max_size=20)


@settings(max_examples=200, deadline=None)
@given(_ms, _ms)
def test_symmetry_and_bounds(gold, pred):
    ab, ba = score_strict(gold, pred)["overall"], score_strict(pred, gold)["overall"]
    assert ab.precision == ba.recall and ab.recall == ba.precision
    assert 0.0 <= ab.f1 <= 1.0
    assert min(ab.precision, ab.recall) - 1e-12 <= ab.f1 <= max(ab.precision, ab.recall) + 1e-12
