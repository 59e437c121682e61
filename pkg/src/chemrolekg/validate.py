"""Yes/no link validation of candidate pairs against a chat LLM.

Verdicts are cached in an append-only JSONL file keyed by the pair, the
validator and the prompt template, so reruns are free and prompt variants
never share verdicts.
"""
from __future__ import annotations

import enum
import hashlib
import json
import logging
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Protocol, Sequence

from .candidates import CandidatePair
from .ontology import normalize_surface

logger = logging.getLogger(__name__)

SYSTEM_PROMPT = "Do you agree with the provided question? Please answer with one word, either 'yes' or 'no'."
USER_PROMPT = "In the sentence '{sentence}': Is {chemical} explicitly described as {role}?"

ENDPOINT_ENV = "CEAR_LLM_ENDPOINT"
TOKEN_ENV = "CEAR_LLM_TOKEN"

STUB_CUES = frozenset({"as", "is", "are", "was", "used"})


class MissingPlaceholder(ValueError):
    pass


class TransportError(RuntimeError):
    pass


class Verdict(str, enum.Enum):
    CONFIRMED = "confirmed"
    REJECTED = "rejected"
    AMBIGUOUS = "ambiguous"


_PLACEHOLDERS = ("{sentence}", "{chemical}", "{role}")


@dataclass(frozen=True)
class PromptTemplate:
    system: str = SYSTEM_PROMPT
    user: str = USER_PROMPT

    def __post_init__(self):
        for ph in _PLACEHOLDERS:
            n = self.user.count(ph)
            if n != 1:
                raise MissingPlaceholder(f"user template must contain {ph} exactly once (found {n})")

    @property
    def digest(self) -> str:
        return hashlib.sha256(f"{self.system}\x00{self.user}".encode("utf-8")).hexdigest()[:16]

    @classmethod
    def from_files(cls, system: str | os.PathLike | None = None, user: str | os.PathLike | None = None):
        return cls(
            Path(system).read_text(encoding="utf-8").rstrip("\n") if system else SYSTEM_PROMPT,
            Path(user).read_text(encoding="utf-8").rstrip("\n") if user else USER_PROMPT,
        )


@dataclass(frozen=True)
class SamplingConfig:
    temperature: float = 0.1
    top_p: float = 0.95
    model_name: str = "Llama-2-7b-chat-hf"
    endpoint: str = ""

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")
        if not 0 < self.top_p <= 1:
            raise ValueError("top_p must be in (0, 1]")


def render_prompts(pair: CandidatePair, tmpl: PromptTemplate = PromptTemplate()) -> tuple[str, str]:
    # sequential replace would re-substitute placeholders appearing in the sentence
    values = {"sentence": pair.sentence_text, "chemical": pair.chemical_surface, "role": pair.role_surface}
    user = re.sub(r"\{(sentence|chemical|role)\}", lambda m: values[m.group(1)], tmpl.user)
    return tmpl.system, user


_EDGE_PUNCT = re.compile(r"^[\W_]+|[\W_]+$")


def parse_answer(raw: str) -> Verdict:
    text = _EDGE_PUNCT.sub("", raw.strip().lower())
    words = re.split(r"[\W_]+", text, maxsplit=1)
    first = words[0] if words else ""
    if first == "yes":
        return Verdict.CONFIRMED
    if first == "no":
        return Verdict.REJECTED
    return Verdict.AMBIGUOUS


def pair_key(pair: CandidatePair) -> tuple:
    loc = pair.location
    return (
        loc.doc_checksum,
        loc.page,
        loc.offset,
        normalize_surface(pair.chemical_surface),
        normalize_surface(pair.role_surface),
    )


@dataclass(frozen=True)
class VerdictRecord:
    pair: CandidatePair
    verdict: Verdict
    raw_answer: str
    validator_id: str
    template_hash: str = ""

    @property
    def cache_key(self) -> str:
        return cache_key(self.pair, self.validator_id, self.template_hash)

    def to_json(self) -> dict:
        return {
            **self.pair.to_json(),
            "verdict": self.verdict.value,
            "raw_answer": self.raw_answer,
            "validator_id": self.validator_id,
            "template_hash": self.template_hash,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), ensure_ascii=False, sort_keys=True)

    @classmethod
    def from_json(cls, raw: dict) -> "VerdictRecord":
        return cls(
            CandidatePair.from_json(raw),
            Verdict(raw["verdict"]),
            raw["raw_answer"],
            raw["validator_id"],
            raw.get("template_hash", ""),
        )


def cache_key(pair: CandidatePair, validator_id: str, template_hash: str) -> str:
    return json.dumps([*pair_key(pair), validator_id, template_hash], ensure_ascii=False)


class VerdictCache:
    """Append-only JSONL verdict store; the first record per key wins."""

    def __init__(self, path: str | os.PathLike | None = None):
        self.path = Path(path) if path is not None else None
        self._lock = threading.Lock()
        self._records: dict[str, VerdictRecord] = {}
        if self.path is not None and self.path.exists():
            with self.path.open(encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        rec = VerdictRecord.from_json(json.loads(line))
                        self._records.setdefault(rec.cache_key, rec)

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self):
        return iter(list(self._records.values()))

    def get(self, key: str) -> VerdictRecord | None:
        return self._records.get(key)

    def add(self, record: VerdictRecord) -> VerdictRecord:
        """Store ``record`` unless its key is taken; returns the stored record."""
        with self._lock:
            existing = self._records.get(record.cache_key)
            if existing is not None:
                return existing
            self._records[record.cache_key] = record
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(record.dumps() + "\n")
            return record

    def compact(self) -> int:
        """Rewrite the file with one line per key; returns the number of dropped lines."""
        if self.path is None or not self.path.exists():
            return 0
        with self._lock:
            with self.path.open(encoding="utf-8") as fh:
                before = sum(1 for line in fh if line.strip())
            tmp = self.path.with_suffix(".tmp")
            with tmp.open("w", encoding="utf-8") as fh:
                for rec in self._records.values():
                    fh.write(rec.dumps() + "\n")
            os.replace(tmp, self.path)
            return before - len(self._records)


class ChatClient(Protocol):
    validator_id: str

    def ask(self, pair: CandidatePair, tmpl: PromptTemplate, cfg: SamplingConfig) -> str: ...


class HttpChatClient:
    """Chat-completions style HTTP client.

    Posts ``{"model", "messages", "temperature", "top_p"}`` and reads the
    first message content of the reply.
    """

    def __init__(
        self,
        endpoint: str | None = None,
        model: str = SamplingConfig.model_name,
        token: str | None = None,
        timeout: float = 60.0,
        attempts: int = 3,
        backoff: float = 1.0,
        transport=None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        import httpx

        self.endpoint = endpoint or os.environ.get(ENDPOINT_ENV, "")
        if not self.endpoint:
            raise ValueError(f"no endpoint given and {ENDPOINT_ENV} is unset")
        self.validator_id = model
        self.model = model
        token = token if token is not None else os.environ.get(TOKEN_ENV)
        headers = {"Authorization": f"Bearer {token}"} if token else {}
        self.attempts = attempts
        self.backoff = backoff
        self._sleep = sleep
        self._http = httpx.Client(timeout=timeout, headers=headers, transport=transport)
        self.calls = 0

    def payload(self, system: str, user: str, cfg: SamplingConfig) -> dict:
        return {
            "model": self.model,
            "messages": [{"role": "system", "content": system}, {"role": "user", "content": user}],
            "temperature": cfg.temperature,
            "top_p": cfg.top_p,
        }

    @staticmethod
    def extract_answer(body: dict) -> str:
        if "choices" in body:
            return body["choices"][0]["message"]["content"]
        if "message" in body:
            return body["message"]["content"]
        if "messages" in body:
            return body["messages"][0]["content"]
        raise KeyError("reply has no message content")

    def ask(self, pair: CandidatePair, tmpl: PromptTemplate, cfg: SamplingConfig) -> str:
        import httpx

        system, user = render_prompts(pair, tmpl)
        body = self.payload(system, user, cfg)
        last: Exception | None = None
        for attempt in range(self.attempts):
            self.calls += 1
            try:
                resp = self._http.post(self.endpoint, json=body)
                resp.raise_for_status()
                return self.extract_answer(resp.json())
            except (httpx.HTTPError, KeyError, IndexError, ValueError) as exc:
                last = exc
                logger.warning("chat call failed (attempt %d/%d): %s", attempt + 1, self.attempts, exc)
                if attempt + 1 < self.attempts:
                    self._sleep(self.backoff * 2**attempt)
        raise TransportError(f"{self.attempts} attempts failed: {last}") from last

    def close(self):
        self._http.close()


def _tokens(text: str) -> list[str]:
    return re.findall(r"\w+", text.lower())


def stub_answer(pair: CandidatePair) -> str:
    """'yes' iff a cue token sits between the first chemical and first role occurrence."""
    s = pair.sentence_text
    i = s.find(pair.chemical_surface)
    j = s.find(pair.role_surface)
    if i < 0 or j < 0 or not pair.chemical_surface or not pair.role_surface:
        return "no"
    if i <= j:
        between = s[i + len(pair.chemical_surface):j]
    else:
        between = s[j + len(pair.role_surface):i]
    return "yes" if STUB_CUES.intersection(_tokens(between)) else "no"


class StubClient:
    """Offline deterministic validator used in tests and dry runs."""

    validator_id = "stub"

    def __init__(self):
        self.calls = 0

    def ask(self, pair: CandidatePair, tmpl: PromptTemplate, cfg: SamplingConfig) -> str:
        self.calls += 1
        return stub_answer(pair)


def stub_validate(pair: CandidatePair) -> VerdictRecord:
    raw = stub_answer(pair)
    return VerdictRecord(pair, parse_answer(raw), raw, "stub")


def validate_pair(
    pair: CandidatePair,
    client: ChatClient,
    cache: VerdictCache,
    tmpl: PromptTemplate = PromptTemplate(),
    cfg: SamplingConfig = SamplingConfig(),
) -> VerdictRecord:
    key = cache_key(pair, client.validator_id, tmpl.digest)
    hit = cache.get(key)
    if hit is not None:
        return hit
    raw = client.ask(pair, tmpl, cfg)
    return cache.add(VerdictRecord(pair, parse_answer(raw), raw, client.validator_id, tmpl.digest))


@dataclass
class ValidationReport:
    records: list[VerdictRecord] = field(default_factory=list)
    failures: list[CandidatePair] = field(default_factory=list)

    def count(self, verdict: Verdict) -> int:
        return sum(1 for r in self.records if r.verdict == verdict)

    @property
    def summary(self) -> dict:
        return {
            "pairs": len(self.records) + len(self.failures),
            "confirmed": self.count(Verdict.CONFIRMED),
            "rejected": self.count(Verdict.REJECTED),
            "ambiguous": self.count(Verdict.AMBIGUOUS),
            "transport_failures": len(self.failures),
        }


def validate_pairs(
    pairs: Sequence[CandidatePair],
    client: ChatClient,
    cache: VerdictCache,
    tmpl: PromptTemplate = PromptTemplate(),
    cfg: SamplingConfig = SamplingConfig(),
    max_in_flight: int = 4,
) -> ValidationReport:
    """Validate every pair; transport failures are reported, not cached."""

    def one(pair):
        try:
            return validate_pair(pair, client, cache, tmpl, cfg)
        except TransportError:
            return pair

    if max_in_flight <= 1:
        results = [one(p) for p in pairs]
    else:
        with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
            results = list(pool.map(one, pairs))
    report = ValidationReport()
    for r in results:
        if isinstance(r, VerdictRecord):
            report.records.append(r)
        else:
            report.failures.append(r)
    return report


def confirmed(records: Iterable[VerdictRecord]) -> list[VerdictRecord]:
    return [r for r in records if r.verdict == Verdict.CONFIRMED]

