import json
import threading

import httpx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chemrolekg.candidates import CandidatePair
from chemrolekg.corpus import TextLocation
from chemrolekg.validate import (
    SYSTEM_PROMPT,
    HttpChatClient,
    MissingPlaceholder,
    PromptTemplate,
    SamplingConfig,
    StubClient,
    TransportError,
    Verdict,
    VerdictCache,
    parse_answer,
    render_prompts,
    stub_validate,
    validate_pair,
    validate_pairs,
)

LOC = TextLocation("c" * 64, 1, 0)


def pair(sentence, chem, role, offset=0):
    return CandidatePair(TextLocation("c" * 64, 1, offset), sentence, chem, role)


def test_defaults():
    t, c = PromptTemplate(), SamplingConfig()
    assert t.system == "Do you agree with the provided question? Please answer with one word, either 'yes' or 'no'."
    assert t.user == "In the sentence '{sentence}': Is {chemical} explicitly described as {role}?"
    assert (c.temperature, c.top_p) == (0.1, 0.95)


def test_render_naoh_cofactor():
    s = "Reaction of trans-b-methylstyrene in NAOH with a cofactor."
    system, user = render_prompts(pair(s, "NAOH", "cofactor"))
    assert system == SYSTEM_PROMPT
    assert user == f"In the sentence '{s}': Is NAOH explicitly described as cofactor?"
    assert user.endswith("Is NAOH explicitly described as cofactor?")


def test_render_keeps_quotes_and_braces_verbatim():
    s = "It's the {role} of '{chemical}'.  "
    _, user = render_prompts(pair(s, "NaOH", "base"))
    assert user == f"In the sentence '{s}': Is NaOH explicitly described as base?"


def test_system_placeholder_typo_left_alone():
    t = PromptTemplate(system="Check {sentence} please", user=PromptTemplate.user)
    system, _ = render_prompts(pair("x", "a", "b"), t)
    assert system == "Check {sentence} please"


@pytest.mark.parametrize("user", ["no placeholders", "{sentence} {chemical}", "{sentence} {chemical} {role} {role}"])
def test_missing_placeholder(user):
    with pytest.raises(MissingPlaceholder):
        PromptTemplate(user=user)


@pytest.mark.parametrize("kw", [{"temperature": -0.1}, {"top_p": 0.0}, {"top_p": 1.5}])
def test_sampling_validation(kw):
    with pytest.raises(ValueError):
        SamplingConfig(**kw)


@pytest.mark.parametrize("raw,want", [
    ("Yes.", Verdict.CONFIRMED),
    ("no", Verdict.REJECTED),
    ("  NO!  ", Verdict.REJECTED),
    ("'yes'", Verdict.CONFIRMED),
    ("Yes, because it is a base.", Verdict.CONFIRMED),
    ("As an expert in chemistry, I would say yes", Verdict.AMBIGUOUS),
    ("yesterday", Verdict.AMBIGUOUS),
    ("", Verdict.AMBIGUOUS),
    ("...", Verdict.AMBIGUOUS),
])
def test_parse_answer(raw, want):
    assert parse_answer(raw) == want


@settings(max_examples=500, deadline=None)
@given(st.text())
def test_parse_answer_total(raw):
    assert parse_answer(raw) in set(Verdict)


@pytest.mark.parametrize("sentence,chem,role,want", [
    ("NaOH was used as a catalyst.", "NaOH", "catalyst", Verdict.CONFIRMED),
    ("NaOH and catalyst decay", "NaOH", "catalyst", Verdict.REJECTED),
    ("The catalyst is NaOH.", "NaOH", "catalyst", Verdict.CONFIRMED),
    ("Water was added.", "NaOH", "catalyst", Verdict.REJECTED),
    ("NaOH, unused catalyst", "NaOH", "catalyst", Verdict.REJECTED),
])
def test_stub(sentence, chem, role, want):
    rec = stub_validate(pair(sentence, chem, role))
    assert rec.verdict == want and rec.validator_id == "stub"
    assert stub_validate(pair(sentence, chem, role)) == rec


def test_cache_first_write_wins_and_reload(tmp_path):
    path = tmp_path / "v.jsonl"
    cache = VerdictCache(path)
    p = pair("NaOH was used as a catalyst.", "NaOH", "catalyst")
    client = StubClient()
    a = validate_pair(p, client, cache)
    b = validate_pair(p, client, cache)
    assert a is b and client.calls == 1
    # a later record under the same key is dropped
    from chemrolekg.validate import VerdictRecord

    other = VerdictRecord(p, Verdict.REJECTED, "no", "stub", PromptTemplate().digest)
    assert cache.add(other) is a
    assert len(path.read_text().splitlines()) == 1
    again = VerdictCache(path)
    assert len(again) == 1 and next(iter(again)) == a


def test_cache_key_uses_normalized_surfaces(tmp_path):
    cache = VerdictCache(tmp_path / "v.jsonl")
    client = StubClient()
    validate_pair(pair("NaOH is a base", "NaOH", "base"), client, cache)
    validate_pair(pair("NaOH is a base", "naoh", "Base"), client, cache)
    assert client.calls == 1


def test_template_change_is_a_different_key(tmp_path):
    cache = VerdictCache(tmp_path / "v.jsonl")
    client = StubClient()
    p = pair("NaOH is a base", "NaOH", "base")
    validate_pair(p, client, cache)
    validate_pair(p, client, cache, PromptTemplate(user="Q: {sentence} {chemical} {role}"))
    assert client.calls == 2


def test_compact(tmp_path):
    path = tmp_path / "v.jsonl"
    cache = VerdictCache(path)
    rec = validate_pair(pair("NaOH is a base", "NaOH", "base"), StubClient(), cache)
    with path.open("a") as fh:
        fh.write(rec.dumps() + "\n")
    fresh = VerdictCache(path)
    assert fresh.compact() == 1
    assert path.read_text() == rec.dumps() + "\n"


def test_accounting_and_warm_rerun(tmp_path):
    pairs = [pair(f"Chem{i} {'is' if i % 3 else 'and'} role{i}.", f"Chem{i}", f"role{i}", i) for i in range(60)]
    path = tmp_path / "v.jsonl"
    client = StubClient()
    rep = validate_pairs(pairs, client, VerdictCache(path), max_in_flight=4)
    s = rep.summary
    assert s["confirmed"] + s["rejected"] + s["ambiguous"] + s["transport_failures"] == 60
    assert s["confirmed"] == 40
    before = path.read_bytes()
    client2 = StubClient()
    rep2 = validate_pairs(pairs, client2, VerdictCache(path))
    assert client2.calls == 0
    assert [r.dumps() for r in rep2.records] == [r.dumps() for r in rep.records]
    assert path.read_bytes() == before


def test_concurrent_adds_keep_one_record_per_key(tmp_path):
    path = tmp_path / "v.jsonl"
    cache = VerdictCache(path)
    p = pair("NaOH is a base", "NaOH", "base")
    barrier = threading.Barrier(8)

    def go():
        barrier.wait()
        validate_pair(p, StubClient(), cache)

    ts = [threading.Thread(target=go) for _ in range(8)]
    for t in ts:
        t.start()
    for t in ts:
        t.join()
    assert len(path.read_text().splitlines()) == 1


# -- HTTP client ---------------------------------------------------------------

def _client(handler, **kw):
    sleeps = []
    c = HttpChatClient("http://llm.test/v1/chat/completions", "m1", token="tok",
                       transport=httpx.MockTransport(handler), sleep=sleeps.append, **kw)
    return c, sleeps


def test_http_payload_and_answer():
    seen = {}

    def handler(request):
        seen["body"] = json.loads(request.content)
        seen["auth"] = request.headers.get("authorization")
        return httpx.Response(200, json={"choices": [{"message": {"role": "assistant", "content": "Yes"}}]})

    client, _ = _client(handler)
    p = pair("NaOH is a base.", "NaOH", "base")
    rec = validate_pair(p, client, VerdictCache())
    assert rec.verdict == Verdict.CONFIRMED and rec.validator_id == "m1"
    body = seen["body"]
    assert body == {
        "model": "m1",
        "messages": [
            {"role": "system", "content": SYSTEM_PROMPT},
            {"role": "user", "content": "In the sentence 'NaOH is a base.': Is NaOH explicitly described as base?"},
        ],
        "temperature": 0.1,
        "top_p": 0.95,
    }
    assert seen["auth"] == "Bearer tok"


def test_http_retries_then_succeeds():
    replies = [httpx.Response(503), httpx.Response(500), httpx.Response(200, json={"message": {"content": "no"}})]
    client, sleeps = _client(lambda r: replies.pop(0))
    assert client.ask(pair("a b", "a", "b"), PromptTemplate(), SamplingConfig()) == "no"
    assert sleeps == [1.0, 2.0] and client.calls == 3


def test_http_transport_error_not_cached(tmp_path):
    client, sleeps = _client(lambda r: httpx.Response(500))
    cache = VerdictCache(tmp_path / "v.jsonl")
    p = pair("a b", "a", "b")
    with pytest.raises(TransportError):
        validate_pair(p, client, cache)
    assert len(cache) == 0 and client.calls == 3 and sleeps == [1.0, 2.0]
    rep = validate_pairs([p], client, cache, max_in_flight=1)
    assert rep.summary["transport_failures"] == 1 and rep.summary["pairs"] == 1


def test_http_endpoint_from_env(monkeypatch):
    monkeypatch.setenv("CEAR_LLM_ENDPOINT", "http://env.test/")
    c = HttpChatClient(transport=httpx.MockTransport(lambda r: httpx.Response(200, json={})))
    assert c.endpoint == "http://env.test/"
    monkeypatch.delenv("CEAR_LLM_ENDPOINT")
    with pytest.raises(ValueError):
        HttpChatClient()
