"""Chat-completion annotation client with a replayable response cache.

Each (model, prompt, sample) triple is sent once to an OpenAI-compatible
``/chat/completions`` endpoint; responses are cached on disk, keyed by
model, prompt id, sample id and temperature, so reruns are deterministic and
need no network. Responses are parsed as one quoted span per line and
aligned back onto the sample text.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import tempfile
import threading
import time
import unicodedata
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, NamedTuple, Sequence

import httpx

from targetspan.corpus import SampleRecord
from targetspan.exceptions import InputError, TargetSpanError
from targetspan.pooling import CandidateId, CandidatePool
from targetspan.spans import SpanSet, TokenizedContent, char_span_to_token_span, merge_union

logger = logging.getLogger(__name__)

PROMPT_1 = (
    "Given the text highlight or underline parts of the text that mention or refer to the specific target.\n"
    "The target is sometimes not explicitly mentioned and you have to look for parts that implicitly refer "
    "to the target."
)
PROMPT_2 = (
    "The task is to highlight multiple text spans from the given input hate speech content that explicitly "
    "and/or implicitly mentions, refers to a specific protected group or their representation or "
    "characteristics that have been targeted."
)
FORMAT_SUFFIX = (
    "\n\nAnswer with one highlighted span per line. Wrap each span in double quotes and copy it exactly "
    "as it appears in the text. Do not write anything else.\n\nText: "
)


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    instruction: str
    format_suffix: str = FORMAT_SUFFIX

    def render(self, text: str) -> str:
        return self.instruction + self.format_suffix + text


BUILTIN_PROMPTS = {
    "prompt1": PromptTemplate("prompt1", PROMPT_1),
    "prompt2": PromptTemplate("prompt2", PROMPT_2),
}


def load_prompts(path: str | Path) -> list[PromptTemplate]:
    """Read a JSON list of ``{"id", "instruction"[, "format_suffix"]}`` objects."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, list):
        raise InputError(f"{path}: expected a JSON list of prompt objects")
    prompts = []
    for item in data:
        try:
            prompts.append(PromptTemplate(item["id"], item["instruction"], item.get("format_suffix", FORMAT_SUFFIX)))
        except (KeyError, TypeError) as exc:
            raise InputError(f"{path}: bad prompt entry {item!r}") from exc
    return prompts


@dataclass(frozen=True)
class ModelConfig:
    endpoint: str
    model: str
    temperature: float = 0.0
    max_retries: int = 3
    request_timeout: float = 60.0
    # Name of the environment variable holding the API key; the key itself is never stored.
    api_key_env: str = "OPENAI_API_KEY"

    def __post_init__(self):
        if self.temperature < 0:
            raise InputError("temperature must be >= 0")
        if self.max_retries < 0:
            raise InputError("max_retries must be >= 0")

    @property
    def url(self) -> str:
        base = self.endpoint.rstrip("/")
        return base if base.endswith("/chat/completions") else base + "/chat/completions"


class RawAnnotation(NamedTuple):
    sample_id: str
    candidate: CandidateId
    response_text: str
    cached: bool


class AnnotationError(TargetSpanError):
    def __init__(self, message: str, candidate: CandidateId, sample_id: str):
        self.candidate = candidate
        self.sample_id = sample_id
        super().__init__(f"{candidate} on sample {sample_id!r}: {message}")


class LLMTransportError(AnnotationError):
    pass


class LLMAuthenticationError(AnnotationError):
    pass


class LLMTimeoutError(AnnotationError):
    pass


class ResponseCache:
    """Cached responses as one JSON file per key, addressed by the key's SHA-256."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self._write_lock = threading.Lock()

    @staticmethod
    def key(model: str, prompt_id: str, sample_id: str, temperature: float) -> str:
        payload = json.dumps([model, prompt_id, sample_id, float(temperature)], ensure_ascii=False)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def _path(self, key: str) -> Path:
        return self.directory / key[:2] / f"{key}.json"

    def get(self, model: str, prompt_id: str, sample_id: str, temperature: float) -> str | None:
        path = self._path(self.key(model, prompt_id, sample_id, temperature))
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            return None
        return data["response"]

    def put(self, model: str, prompt_id: str, sample_id: str, temperature: float, response: str) -> None:
        path = self._path(self.key(model, prompt_id, sample_id, temperature))
        entry = {"model": model, "prompt": prompt_id, "sample_id": sample_id,
                 "temperature": float(temperature), "response": response}
        with self._write_lock:
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(entry, fh, ensure_ascii=False, indent=1, sort_keys=True)
            os.replace(tmp, path)


class Annotator:
    """Runs prompts against chat-completion endpoints through a response cache.

    ``transport`` and ``sleep`` exist so tests can script the endpoint and
    skip real waiting.
    """

    def __init__(self, cache: ResponseCache | None = None, transport: httpx.BaseTransport | None = None,
                 sleep: Callable[[float], None] = time.sleep, backoff_base: float = 1.0,
                 backoff_max: float = 30.0):
        self.cache = cache
        self.sleep = sleep
        self.backoff_base = backoff_base
        self.backoff_max = backoff_max
        self._client = httpx.Client(transport=transport)
        self._lock = threading.Lock()
        self.network_calls = 0

    def close(self) -> None:
        self._client.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def annotate(self, sample: SampleRecord, prompt: PromptTemplate, config: ModelConfig) -> RawAnnotation:
        candidate = CandidateId(config.model, prompt.id)
        if self.cache is not None:
            hit = self.cache.get(config.model, prompt.id, sample.id, config.temperature)
            if hit is not None:
                return RawAnnotation(sample.id, candidate, hit, True)
        text = self._complete(prompt.render(sample.text), config, candidate, sample.id)
        if self.cache is not None:
            self.cache.put(config.model, prompt.id, sample.id, config.temperature, text)
        return RawAnnotation(sample.id, candidate, text, False)

    def _complete(self, prompt_text: str, config: ModelConfig, candidate: CandidateId, sample_id: str) -> str:
        headers = {}
        api_key = os.environ.get(config.api_key_env)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        body = {
            "model": config.model,
            "messages": [{"role": "user", "content": prompt_text}],
            "temperature": config.temperature,
        }
        timed_out = False
        last_problem = ""
        for attempt in range(config.max_retries + 1):
            delay = min(self.backoff_max, self.backoff_base * 2 ** attempt)
            with self._lock:
                self.network_calls += 1
            try:
                response = self._client.post(config.url, json=body, headers=headers, timeout=config.request_timeout)
            except httpx.TimeoutException as exc:
                timed_out, last_problem = True, f"timeout: {exc}"
            except httpx.TransportError as exc:
                timed_out, last_problem = False, f"transport failure: {exc}"
            else:
                status = response.status_code
                if status in (401, 403):
                    raise LLMAuthenticationError(f"endpoint rejected credentials (HTTP {status})", candidate, sample_id)
                if status == 429 or status >= 500:
                    timed_out, last_problem = False, f"HTTP {status}"
                    delay = max(delay, _retry_after(response))
                elif status >= 400:
                    raise LLMTransportError(f"HTTP {status}: {response.text[:200]}", candidate, sample_id)
                else:
                    try:
                        return response.json()["choices"][0]["message"]["content"] or ""
                    except (ValueError, KeyError, IndexError, TypeError):
                        timed_out, last_problem = False, "malformed completion body"
            if attempt < config.max_retries:
                logger.warning("%s on sample %r: %s; retry %d/%d in %.1fs",
                               candidate, sample_id, last_problem, attempt + 1, config.max_retries, delay)
                self.sleep(delay)
        message = f"{last_problem} after {config.max_retries + 1} attempts"
        if timed_out:
            raise LLMTimeoutError(message, candidate, sample_id)
        raise LLMTransportError(message, candidate, sample_id)


def _retry_after(response: httpx.Response) -> float:
    try:
        return float(response.headers.get("Retry-After", 0))
    except ValueError:
        return 0.0


class ParsedAnnotation(NamedTuple):
    spans: SpanSet
    unmatched: tuple[str, ...]


_QUOTED = re.compile(r'"([^"]+)"|“([^”]+)”')


def extract_quotes(response_text: str) -> list[str]:
    """First quoted string on each line of a response."""
    found = []
    for line in response_text.splitlines():
        m = _QUOTED.search(line)
        if m:
            quote = (m.group(1) or m.group(2)).strip()
            if quote:
                found.append(unicodedata.normalize("NFC", quote))
    return found


def _occurrences(text: str, needle: str, ignore_case: bool) -> list[tuple[int, int]]:
    flags = re.IGNORECASE if ignore_case else 0
    return [(m.start(1), m.end(1)) for m in re.finditer(f"(?=({re.escape(needle)}))", text, flags)]


def locate(text: str, quote: str, consumed: Sequence[tuple[int, int]]) -> tuple[int, int] | None:
    """Character range of ``quote`` in ``text``.

    Preference order: exact and unconsumed, case-insensitive and unconsumed,
    then exact or case-insensitive even if it overlaps an earlier match.
    Within each tier the leftmost occurrence wins.
    """
    exact = _occurrences(text, quote, False)
    folded = _occurrences(text, quote, True)
    if len(folded) > 1:
        logger.debug("quote %r occurs %d times; taking leftmost unconsumed", quote, len(folded))

    def free(r):
        return all(r[1] <= s or e <= r[0] for s, e in consumed)

    for tier in ([r for r in exact if free(r)], [r for r in folded if free(r)], exact, folded):
        if tier:
            return tier[0]
    return None


def parse_response(raw: RawAnnotation | str, content: TokenizedContent) -> ParsedAnnotation:
    """Align quoted extractions to token spans; quotes not found in the text are returned unmatched."""
    response_text = raw if isinstance(raw, str) else raw.response_text
    consumed: list[tuple[int, int]] = []
    spans = []
    unmatched = []
    for quote in extract_quotes(response_text):
        found = locate(content.text, quote, consumed)
        span = char_span_to_token_span(content, *found) if found else None
        if span is None:
            unmatched.append(quote)
            continue
        consumed.append(found)
        spans.append(SpanSet.of(span))
    return ParsedAnnotation(merge_union(spans), tuple(unmatched))


@dataclass(frozen=True)
class Failure:
    candidate: CandidateId
    sample_id: str
    error: str
    message: str


@dataclass
class PoolRun:
    pool: CandidatePool
    failures: list[Failure] = field(default_factory=list)
    raw: list[RawAnnotation] = field(default_factory=list)
    unmatched: dict[tuple[CandidateId, str], tuple[str, ...]] = field(default_factory=dict)

    @property
    def failed_candidates(self) -> list[CandidateId]:
        return sorted({f.candidate for f in self.failures})


def run_pool(samples: Sequence[SampleRecord], prompts: Sequence[PromptTemplate], configs: Sequence[ModelConfig],
             annotator: Annotator, concurrency_limit: int = 4,
             gold: Mapping[str, SpanSet] | None = None) -> PoolRun:
    """Annotate every (prompt, model, sample) triple and collect a candidate pool.

    At most ``concurrency_limit`` requests are in flight. A candidate with any
    failed triple is left out of the pool and listed in ``failures``.
    """
    if concurrency_limit < 1:
        raise InputError("concurrency_limit must be >= 1")
    ids = [s.id for s in samples]
    if len(set(ids)) != len(ids):
        raise InputError("sample ids must be unique")
    candidates = [CandidateId(c.model, p.id) for c in configs for p in prompts]
    if len(set(candidates)) != len(candidates):
        raise InputError("(model, prompt id) pairs must be unique")
    triples = [(c, p, s) for c in configs for p in prompts for s in samples]

    def work(triple):
        config, prompt, sample = triple
        try:
            return annotator.annotate(sample, prompt, config)
        except AnnotationError as exc:
            return Failure(exc.candidate, exc.sample_id, type(exc).__name__, str(exc))

    with ThreadPoolExecutor(max_workers=concurrency_limit) as executor:
        results = list(executor.map(work, triples))

    contents = {s.id: s.content for s in samples}
    run = PoolRun(CandidatePool({}, dict(gold) if gold is not None else {}, contents))
    run.failures = sorted((r for r in results if isinstance(r, Failure)),
                          key=lambda f: (f.candidate, f.sample_id))
    failed = {f.candidate for f in run.failures}
    for result in results:
        if isinstance(result, Failure):
            continue
        run.raw.append(result)
        if result.candidate in failed:
            continue
        parsed = parse_response(result, contents[result.sample_id])
        run.pool.candidates.setdefault(result.candidate, {})[result.sample_id] = parsed.spans
        if parsed.unmatched:
            run.unmatched[(result.candidate, result.sample_id)] = parsed.unmatched
    if gold is not None:
        run.pool.contents = {s: contents[s] for s in gold}
        run.pool.validate()
    return run
