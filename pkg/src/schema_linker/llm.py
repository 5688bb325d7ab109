"""Prompt rendering, reply parsing, and the completion client stack.

Every completion goes through a transcript cache keyed by a digest of the
full request. Record mode forwards novel requests to a live
OpenAI-compatible backend and persists the replies; replay mode answers
exclusively from the cache, so evaluation runs are deterministic and
network-free. A cache miss in replay mode is fatal by design.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Protocol, Sequence

import requests

from .errors import (
    BackendError,
    CacheMissError,
    EmptyAfterFilteringError,
    OutOfRangeError,
    ReplyParseError,
)
from .schema_model import Schema
from .sql_analysis import render_schema

log = logging.getLogger(__name__)

API_URL_ENV = "SCHEMA_LINKER_API_URL"
API_KEY_ENV = "SCHEMA_LINKER_API_KEY"

DEFAULT_MODEL = "google/gemini-2.5-flash-preview"


class PromptId(str, Enum):
    SRC_DST = "src_dst"
    PATH_SELECT = "path_select"
    SQL_GEN_LINKED = "sql_gen_linked"
    SQL_GEN_BASELINE = "sql_gen_baseline"


SYSTEM_PROMPTS: dict[PromptId, str] = {
    PromptId.SRC_DST: """\
ROLE & OBJECTIVE
You are a senior data engineer who analyses SQL schemas and maps user questions precisely to source tables (filtering) and destination tables (final result columns).

TASK
Identify:
- Source table(s) (src): contain columns used in filters/conditions.
- Destination table(s) (dst): contain columns returned in the answer.

INSTRUCTIONS
1. Internally inspect every table to determine
   - which tables participate in filtering, and
   - which tables supply the requested output columns.
   Briefly justify your choice internally but do not include that justification in the final answer.
2. Output exactly one line in the following format:
   src=TableA,TableB, dst=TableC,TableD
""",
    PromptId.PATH_SELECT: """\
ROLE & OBJECTIVE
You are a database expert tasked with selecting the optimal join path to answer user questions using a provided SQL schema.

TASK
Choose the single most appropriate join path from a list of candidates that correctly connects the relevant tables.

INSTRUCTIONS
1. Internally inspect each path to determine:
   - whether it connects all necessary tables,
   - whether joins are complete and valid,
   - and whether it satisfies the intent of the question.
   Briefly justify your decision internally but do not include any reasoning in the final output.
2. Output one line in the following format:
   Final Answer: path_id: <ID>
""",
    PromptId.SQL_GEN_LINKED: """\
ROLE & OBJECTIVE
You are an expert in SQLite query generation. Your task is to generate a valid query to answer a user question based on the given schema and join path.

INPUTS
- Schema:
{schema}
- Join Path: {join_path_string}
- Question Context: {evidence_string}

INSTRUCTIONS
1. Use the provided schema and join path to construct a valid SQLite query.
2. Ensure the query correctly answers the user's question.
3. Format the query clearly and confirm it adheres to SQLite syntax.
""",
    PromptId.SQL_GEN_BASELINE: """\
ROLE & OBJECTIVE
You are an expert in SQLite query generation. Your task is to produce a valid query that answers a user's question using the provided schema.

INPUTS
- Schema:
{schema}
- Question Context: {evidence_string}

INSTRUCTIONS
1. Generate a correct SQLite query that answers the user question.
2. Ensure the query is syntactically valid and aligns with the schema.
3. Format the query clearly and cleanly.
""",
}

DEFAULT_TEMPERATURES: dict[PromptId, float] = {
    PromptId.SRC_DST: 0.2,
    PromptId.PATH_SELECT: 0.2,
    PromptId.SQL_GEN_LINKED: 0.3,
    PromptId.SQL_GEN_BASELINE: 0.3,
}

RETRY_NUDGE = (
    "Reminder: reply with exactly one line in the form "
    "src=TableA,TableB, dst=TableC,TableD using only table names from the schema."
)


@dataclass(frozen=True)
class CompletionRequest:
    model_name: str
    system_text: str
    user_text: str
    temperature: float


def _normalize_newlines(text: str) -> str:
    return text.replace("\r\n", "\n").replace("\r", "\n")


def request_digest(request: CompletionRequest) -> str:
    """Stable content digest identifying a request in the transcript cache."""
    payload = {
        "model": request.model_name,
        "system": _normalize_newlines(request.system_text),
        "user": _normalize_newlines(request.user_text),
        "temperature": round(float(request.temperature), 6),
    }
    blob = json.dumps(payload, sort_keys=True, ensure_ascii=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _fill(template: str, values: dict[str, str]) -> str:
    # Literal replacement; str.format would choke on braces inside content.
    out = template
    for key, val in values.items():
        out = out.replace("{" + key + "}", val)
    return out


def estimate_tokens(text: str) -> int:
    """Crude budget estimate: about four characters per token."""
    return max(1, len(text) // 4)


def render_src_dst_prompt(
    question: str,
    schema: Schema,
    evidence: str | None = None,
    *,
    model_name: str = DEFAULT_MODEL,
    temperature: float | None = None,
) -> CompletionRequest:
    """Prompt asking for source and destination tables for a question."""
    if temperature is None:
        temperature = DEFAULT_TEMPERATURES[PromptId.SRC_DST]
    parts = [
        f"Database: {schema.database_id}",
        "",
        "Schema:",
        render_schema(schema),
        "",
        f"Question: {question}",
    ]
    if evidence:
        parts.append(f"Evidence: {evidence}")
    return CompletionRequest(
        model_name=model_name,
        system_text=SYSTEM_PROMPTS[PromptId.SRC_DST],
        user_text="\n".join(parts),
        temperature=temperature,
    )


def render_path_select_prompt(
    question: str,
    candidate_lines: Sequence[str],
    *,
    model_name: str = DEFAULT_MODEL,
    temperature: float | None = None,
) -> CompletionRequest:
    """Prompt asking the model to pick one candidate join path."""
    if temperature is None:
        temperature = DEFAULT_TEMPERATURES[PromptId.PATH_SELECT]
    user_text = (
        f"Question: {question}\n\nCandidate join paths:\n" + "\n".join(candidate_lines)
    )
    return CompletionRequest(
        model_name=model_name,
        system_text=SYSTEM_PROMPTS[PromptId.PATH_SELECT],
        user_text=user_text,
        temperature=temperature,
    )


def render_sql_gen_prompt(
    question: str,
    schema_text: str,
    *,
    join_path_text: str | None = None,
    evidence: str | None = None,
    baseline: bool = False,
    model_name: str = DEFAULT_MODEL,
    temperature: float | None = None,
) -> CompletionRequest:
    """Prompt asking for a SQLite query, with or without a join path."""
    prompt_id = PromptId.SQL_GEN_BASELINE if baseline else PromptId.SQL_GEN_LINKED
    if temperature is None:
        temperature = DEFAULT_TEMPERATURES[prompt_id]
    values = {
        "schema": schema_text,
        "evidence_string": evidence if evidence else "(none)",
    }
    if not baseline:
        values["join_path_string"] = join_path_text or "(single table, no joins)"
    return CompletionRequest(
        model_name=model_name,
        system_text=_fill(SYSTEM_PROMPTS[prompt_id], values),
        user_text=f"Question: {question}",
        temperature=temperature,
    )


@dataclass(frozen=True)
class EndpointExtraction:
    """Parsed source/destination nomination for one question."""

    sources: tuple[str, ...]
    destinations: tuple[str, ...]
    raw_reply: str = ""
    warnings: tuple[str, ...] = ()
    degraded: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "sources", tuple(self.sources))
        object.__setattr__(self, "destinations", tuple(self.destinations))
        object.__setattr__(self, "warnings", tuple(self.warnings))
        if not self.sources or not self.destinations:
            raise ValueError("an extraction needs at least one table on each side")


_SRC_RE = re.compile(r"\bsrc\s*=\s*(.*?)(?=\bdst\s*=|$)", re.IGNORECASE)
_DST_RE = re.compile(r"\bdst\s*=\s*(.*?)(?=\bsrc\s*=|$)", re.IGNORECASE)


def _split_names(raw: str) -> list[str]:
    names = []
    for token in raw.split(","):
        # Quoting and trailing punctuation can nest either way around.
        token, previous = token.strip(), None
        while token != previous:
            previous = token
            token = token.strip("\"'`[]").rstrip(".;:!").strip()
        if token:
            names.append(token)
    return names


def parse_src_dst_reply(reply: str, schema: Schema) -> EndpointExtraction:
    """Parse a source/destination reply against the schema.

    The last complete src/dst pair in the reply wins (models sometimes
    restate their answer). Unknown names are dropped with a warning; a pair
    that leaves either side empty is an EMPTY_AFTER_FILTERING error, and a
    reply without any pair at all is a NO_PARSE error.
    """
    lines = reply.splitlines()
    pairs: list[tuple[str, str]] = []
    for i, line in enumerate(lines):
        src_match = _SRC_RE.search(line)
        dst_match = _DST_RE.search(line)
        if src_match and dst_match:
            pairs.append((src_match.group(1), dst_match.group(1)))
            continue
        if src_match and i + 1 < len(lines):
            follow = _DST_RE.search(lines[i + 1])
            if follow and not _SRC_RE.search(lines[i + 1]):
                pairs.append((src_match.group(1), follow.group(1)))
            continue
        if dst_match and i + 1 < len(lines):
            follow = _SRC_RE.search(lines[i + 1])
            if follow and not _DST_RE.search(lines[i + 1]):
                pairs.append((follow.group(1), dst_match.group(1)))
    if not pairs:
        raise ReplyParseError("no src=/dst= line found in reply")

    raw_sources, raw_destinations = pairs[-1]
    warnings: list[str] = []

    def resolve(raw: str) -> tuple[str, ...]:
        out: list[str] = []
        seen: set[str] = set()
        for name in _split_names(raw):
            canonical = schema.resolve_table(name)
            if canonical is None:
                warnings.append(f"unknown table {name!r} dropped from reply")
                continue
            key = canonical.casefold()
            if key not in seen:
                seen.add(key)
                out.append(canonical)
        return tuple(out)

    sources = resolve(raw_sources)
    destinations = resolve(raw_destinations)
    if not sources or not destinations:
        raise EmptyAfterFilteringError(
            "no usable table names remain after matching the reply to the schema"
        )
    return EndpointExtraction(
        sources=sources,
        destinations=destinations,
        raw_reply=reply,
        warnings=tuple(warnings),
    )


def degraded_extraction(schema: Schema, raw_reply: str = "") -> EndpointExtraction:
    """Fallback used when no usable endpoints could be extracted."""
    names = tuple(schema.table_names)
    return EndpointExtraction(
        sources=names,
        destinations=names,
        raw_reply=raw_reply,
        warnings=("endpoint extraction failed; treating every table as src and dst",),
        degraded=True,
    )


_PATH_ID_RE = re.compile(r"path_?\s*id\s*[:=]\s*(\d+)", re.IGNORECASE)


def parse_path_select_reply(reply: str, max_id: int) -> int:
    """Extract the chosen path id; the last stated id wins."""
    if max_id < 1:
        raise ValueError("max_id must be at least 1")
    matches = _PATH_ID_RE.findall(reply)
    if not matches:
        raise ReplyParseError("no path_id found in reply")
    value = int(matches[-1])
    if not 1 <= value <= max_id:
        raise OutOfRangeError(f"path_id {value} outside 1..{max_id}")
    return value


class CompletionClient(Protocol):
    def complete(self, request: CompletionRequest) -> str: ...


class TranscriptCache:
    """Append-only JSON-lines store of request digests and replies."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._entries: dict[str, str] = {}
        if self.path.exists():
            for line_no, line in enumerate(
                self.path.read_text(encoding="utf-8").splitlines(), start=1
            ):
                line = line.strip()
                if not line:
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise CacheMissError(
                        f"{self.path}:{line_no}: unreadable cache line: {exc.msg}"
                    ) from exc
                self._entries[record["digest"]] = record["reply"]

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, digest: str) -> str | None:
        with self._lock:
            return self._entries.get(digest)

    def put(self, request: CompletionRequest, reply: str) -> None:
        digest = request_digest(request)
        record = {
            "digest": digest,
            "model": request.model_name,
            "temperature": request.temperature,
            "system": request.system_text,
            "user": request.user_text,
            "reply": reply,
            "timestamp": datetime.now(timezone.utc).isoformat(),
        }
        with self._lock:
            if digest in self._entries:
                return
            self._entries[digest] = reply
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as handle:
                handle.write(json.dumps(record, ensure_ascii=True, sort_keys=True) + "\n")

    def records(self) -> list[dict]:
        """Re-read the backing file; used for inspection and tests."""
        if not self.path.exists():
            return []
        out = []
        for line in self.path.read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if line:
                out.append(json.loads(line))
        return out


class HttpCompletionClient:
    """Chat-completions client for any OpenAI-compatible endpoint.

    Network and 5xx failures are retried with exponential backoff; other
    HTTP errors fail immediately. Token usage reported by the backend is
    accumulated and can be drained with pop_usage().
    """

    def __init__(
        self,
        api_url: str | None = None,
        api_key: str | None = None,
        *,
        timeout: float = 120.0,
        max_attempts: int = 3,
        backoff_s: float = 1.0,
    ):
        self.api_url = api_url or os.environ.get(API_URL_ENV)
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV, "")
        if not self.api_url:
            raise BackendError(f"no API endpoint configured; set {API_URL_ENV}")
        self.timeout = timeout
        self.max_attempts = max_attempts
        self.backoff_s = backoff_s
        self._lock = threading.Lock()
        self._usage: dict[str, int] = {}

    def complete(self, request: CompletionRequest) -> str:
        body = {
            "model": request.model_name,
            "messages": [
                {"role": "system", "content": request.system_text},
                {"role": "user", "content": request.user_text},
            ],
            "temperature": request.temperature,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_error: Exception | None = None
        for attempt in range(self.max_attempts):
            if attempt:
                time.sleep(self.backoff_s * (2 ** (attempt - 1)))
            try:
                response = requests.post(
                    self.api_url, json=body, headers=headers, timeout=self.timeout
                )
            except requests.RequestException as exc:
                last_error = exc
                continue
            if response.status_code >= 500:
                last_error = BackendError(f"server error {response.status_code}")
                continue
            if response.status_code != 200:
                raise BackendError(
                    f"request failed with status {response.status_code}: "
                    f"{response.text[:200]}"
                )
            try:
                data = response.json()
                text = data["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise BackendError(f"malformed completion response: {exc}") from exc
            if not isinstance(text, str):
                raise BackendError("completion content is not text")
            usage = data.get("usage")
            if isinstance(usage, dict):
                with self._lock:
                    for key, val in usage.items():
                        if isinstance(val, int):
                            self._usage[key] = self._usage.get(key, 0) + val
            return text
        raise BackendError(
            f"backend unreachable after {self.max_attempts} attempts: {last_error}"
        )

    def pop_usage(self) -> dict[str, int]:
        with self._lock:
            usage, self._usage = self._usage, {}
            return usage


class CacheMode(str, Enum):
    RECORD = "record"
    REPLAY = "replay"


class CachingClient:
    """Serves completions from a transcript cache.

    Replay mode never touches the network; record mode forwards novel
    requests to the backend and persists exactly one entry per novel
    digest. Hit and backend-call counters are kept for diagnostics.
    """

    def __init__(
        self,
        cache: TranscriptCache,
        backend: CompletionClient | None = None,
        mode: CacheMode | str = CacheMode.REPLAY,
    ):
        self.cache = cache
        self.backend = backend
        self.mode = CacheMode(mode)
        if self.mode is CacheMode.RECORD and backend is None:
            raise ValueError("record mode needs a live backend")
        self._lock = threading.Lock()
        self.cache_hits = 0
        self.backend_calls = 0

    def complete(self, request: CompletionRequest) -> str:
        digest = request_digest(request)
        cached = self.cache.get(digest)
        if cached is not None:
            with self._lock:
                self.cache_hits += 1
            return cached
        if self.mode is CacheMode.REPLAY:
            raise CacheMissError(
                f"no cached reply for digest {digest[:12]} in replay mode"
            )
        reply = self.backend.complete(request)
        with self._lock:
            self.backend_calls += 1
        self.cache.put(request, reply)
        return reply

    def pop_usage(self) -> dict[str, int]:
        if self.backend is not None and hasattr(self.backend, "pop_usage"):
            return self.backend.pop_usage()
        return {}


class LlmEndpointOracle:
    """Source/destination nomination with retry-then-degrade on bad replies.

    An unusable first reply triggers one retry with a format reminder
    appended to the user text (a distinct, cacheable request). If that also
    fails, or no retry transcript exists in replay mode, the oracle degrades
    to nominating every table instead of failing the question.
    """

    def __init__(
        self,
        client: CompletionClient,
        model_name: str = DEFAULT_MODEL,
        temperature: float | None = None,
        retry: bool = True,
    ):
        self.client = client
        self.model_name = model_name
        self.temperature = (
            DEFAULT_TEMPERATURES[PromptId.SRC_DST] if temperature is None else temperature
        )
        self.retry = retry

    def __call__(
        self, question: str, schema: Schema, evidence: str | None = None
    ) -> EndpointExtraction:
        request = render_src_dst_prompt(
            question,
            schema,
            evidence,
            model_name=self.model_name,
            temperature=self.temperature,
        )
        reply = self.client.complete(request)
        try:
            return parse_src_dst_reply(reply, schema)
        except (ReplyParseError, EmptyAfterFilteringError):
            pass
        if self.retry:
            nudged = CompletionRequest(
                model_name=request.model_name,
                system_text=request.system_text,
                user_text=request.user_text + "\n\n" + RETRY_NUDGE,
                temperature=request.temperature,
            )
            try:
                reply = self.client.complete(nudged)
                return parse_src_dst_reply(reply, schema)
            except CacheMissError:
                log.warning("no retry transcript available; degrading")
            except (ReplyParseError, EmptyAfterFilteringError):
                pass
        return degraded_extraction(schema, raw_reply=reply)


class LlmPathOracle:
    """Candidate selection; raises NO_PARSE or OUT_OF_RANGE on bad replies."""

    def __init__(
        self,
        client: CompletionClient,
        model_name: str = DEFAULT_MODEL,
        temperature: float | None = None,
    ):
        self.client = client
        self.model_name = model_name
        self.temperature = (
            DEFAULT_TEMPERATURES[PromptId.PATH_SELECT]
            if temperature is None
            else temperature
        )

    def __call__(self, question: str, candidate_lines: list[str]) -> int:
        request = render_path_select_prompt(
            question,
            candidate_lines,
            model_name=self.model_name,
            temperature=self.temperature,
        )
        reply = self.client.complete(request)
        return parse_path_select_reply(reply, max_id=len(candidate_lines))
