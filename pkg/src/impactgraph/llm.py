"""Chat-completion backends, prompt templates and response parsers."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

from .core import (
    ARTICLE,
    InvalidEntityError,
    Portfolio,
    RelationalTuple,
    Vertex,
    normalize_entity,
)

log = logging.getLogger(__name__)

BINARY = "binary"
PROBABILITY = "probability"

SYSTEM_PROMPT = (
    "You are a financial analyst who traces how news events propagate "
    "through companies, industries, markets and economies."
)


class BackendError(RuntimeError):
    """Base class for chat backend failures."""


class TransportError(BackendError):
    """The backend could not be reached, or kept failing after retries."""


class FatalHTTPError(BackendError):
    """The endpoint rejected the request (4xx); retrying would not help."""


class FixtureMissError(BackendError):
    """A scripted backend has no recorded response for a request."""


class ParseError(ValueError):
    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


@dataclass(frozen=True)
class ChatRequest:
    model_name: str
    messages: tuple[tuple[str, str], ...]
    temperature: float = 0.0

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("a chat request needs at least one message")
        for role, _ in self.messages:
            if role not in ("system", "user"):
                raise ValueError(f"unsupported role {role!r}")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature {self.temperature} outside [0, 2]")

    @property
    def digest(self) -> str:
        return request_digest(self.messages)

    def to_payload(self) -> dict:
        return {
            "model": self.model_name,
            "temperature": self.temperature,
            "messages": [{"role": r, "content": t} for r, t in self.messages],
        }


def request_digest(messages: Sequence[tuple[str, str]]) -> str:
    """Hash of the message texts only; model name and temperature are ignored."""
    h = hashlib.sha256()
    for _, text in messages:
        h.update(text.encode("utf-8"))
        h.update(b"\x1e")
    return h.hexdigest()


class Backend(Protocol):
    def complete(self, request: ChatRequest) -> str: ...


def complete(backend: Backend, request: ChatRequest) -> str:
    return backend.complete(request)


class ScriptedBackend:
    """Replays responses from a JSONL fixture keyed by request digest.

    Accepts fixture records (``digest``, ``response_text``) as well as the
    ``transcripts.jsonl`` written by a run, so live runs can be replayed.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        if not self.path.is_file():
            raise FileNotFoundError(f"scripted fixture file not found: {self.path}")
        self.responses: dict[str, str] = {}
        with self.path.open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    if "prompt_digest" in rec:
                        if rec["raw_response"] is not None:
                            self.responses[rec["prompt_digest"]] = rec["raw_response"]
                        continue
                    self.responses[rec["digest"]] = rec["response_text"]
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise ValueError(f"{self.path}:{lineno}: bad fixture record ({exc})") from None

    def complete(self, request: ChatRequest) -> str:
        digest = request.digest
        try:
            return self.responses[digest]
        except KeyError:
            preview = request.messages[-1][1][:200].replace("\n", " ")
            raise FixtureMissError(
                f"no scripted response for digest {digest} in {self.path} (prompt starts: {preview!r})"
            ) from None


class HttpBackend:
    """JSON chat-completion client with bounded retries.

    Transport failures and 5xx responses are retried with exponential
    backoff; 4xx responses fail immediately.
    """

    def __init__(
        self,
        url: str,
        model_name: str = "gpt-3.5-turbo",
        token_env: str | None = "OPENAI_API_KEY",
        *,
        attempts: int = 3,
        backoff: float = 1.0,
        timeout: float = 60.0,
        max_in_flight: int = 4,
    ):
        if not re.match(r"^https?://[^\s/]+", url):
            raise ValueError(f"malformed backend url: {url!r}")
        if attempts < 1:
            raise ValueError("attempts must be >= 1")
        self.url = url
        self.model_name = model_name
        self.token_env = token_env
        self.attempts = attempts
        self.backoff = backoff
        self.timeout = timeout
        self._slots = threading.BoundedSemaphore(max_in_flight)

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.token_env) if self.token_env else None
        if token:
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def _post(self, body: bytes) -> str:
        req = urllib.request.Request(self.url, data=body, headers=self._headers(), method="POST")
        with self._slots, urllib.request.urlopen(req, timeout=self.timeout) as resp:
            payload = json.loads(resp.read().decode("utf-8"))
        try:
            return payload["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise TransportError(f"unexpected response shape from {self.url}") from None

    def complete(self, request: ChatRequest) -> str:
        payload = request.to_payload()
        payload["model"] = request.model_name or self.model_name
        body = json.dumps(payload).encode("utf-8")
        last: Exception | None = None
        for attempt in range(self.attempts):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                return self._post(body)
            except urllib.error.HTTPError as exc:
                if 400 <= exc.code < 500:
                    raise FatalHTTPError(f"{self.url} returned {exc.code}") from exc
                last = exc
            except (urllib.error.URLError, OSError, json.JSONDecodeError) as exc:
                last = exc
            log.warning("backend call failed (attempt %d/%d): %s", attempt + 1, self.attempts, last)
        raise TransportError(f"{self.url} failed after {self.attempts} attempts: {last}")


def make_backend(spec: str, *, model_name: str = "gpt-3.5-turbo", token_env: str | None = None,
                 **http_options) -> Backend:
    """Build a backend from ``scripted:<path>`` or an ``http(s)://`` url."""
    if spec.startswith("scripted:"):
        return ScriptedBackend(spec.split(":", 1)[1])
    if spec.startswith("http:") and not spec.startswith("http://"):
        spec = spec.split(":", 1)[1]
    if spec.startswith(("http://", "https://")):
        return HttpBackend(spec, model_name, token_env or "OPENAI_API_KEY", **http_options)
    raise ValueError(f"unrecognized backend {spec!r}; use scripted:<path> or an http(s) url")


@dataclass
class Transcript:
    """Append-only log of every prompt and raw response."""

    path: Path | None = None
    records: list[dict] = field(default_factory=list)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def add(self, **record) -> None:
        with self._lock:
            self.records.append(record)
            if self.path is not None:
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(record, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# prompts

def _portfolio_block(portfolio: Portfolio) -> str:
    if portfolio.mode == "economy":
        lines = [f"- {m.name}" for m in portfolio.members]
        return "Target economies:\n" + "\n".join(lines)
    lines = [f"- {m.name} ({m.ticker})" + (f", {m.category}" if m.category else "") for m in portfolio.members]
    return "Portfolio stocks:\n" + "\n".join(lines)


def _request(user: str, model_name: str, temperature: float) -> ChatRequest:
    return ChatRequest(model_name, (("system", SYSTEM_PROMPT), ("user", user)), temperature)


def _format_instruction(k: int) -> str:
    return (
        f"List at most {k} impacted entities, one per line, numbered, in exactly this format:\n"
        "1. Entity | Explanation\n"
        "If a listed portfolio member is directly impacted, use its name exactly as listed."
    )


def build_brainstorm_prompt(
    source: Vertex,
    source_text: str,
    portfolio: Portfolio,
    k: int,
    *,
    chain: Sequence[str] = (),
    body: str = "",
    body_char_cap: int = 2000,
    model_name: str = "gpt-3.5-turbo",
    temperature: float = 0.0,
) -> ChatRequest:
    """Ask for the entities impacted by an article (initial form) or by an entity.

    ``chain`` is the provenance of an entity source: display labels from the
    originating headline down to the entity itself.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    parts = [_portfolio_block(portfolio), ""]
    if source.kind == ARTICLE:
        parts.append(f"News headline: {source_text}")
        text = body[:body_char_cap].strip()
        if text:
            parts.append(f"News article: {text}")
        parts += ["", "Which entities are directly impacted by this news event?"]
    else:
        parts.append(f"Impacted entity: {source_text}")
        if chain:
            parts.append("Impact chain so far: " + " -> ".join(chain))
        parts += ["", f"Which entities are impacted in turn by the effect on {source_text}?"]
    parts.append(_format_instruction(k))
    return _request("\n".join(parts), model_name, temperature)


def _tuple_line(t: RelationalTuple, labels: dict[str, str]) -> str:
    return f"({t.t.isoformat()}, {labels.get(t.subject, t.subject)}, {t.relation}, {labels.get(t.object, t.object)})"


def _answer_instruction(mode: str, portfolio: Portfolio) -> str:
    if mode == BINARY:
        return (
            "Will the portfolio crash on the next trading day? "
            "End your answer with a final line that reads exactly \"Prediction: Yes\" or \"Prediction: No\"."
        )
    if mode == PROBABILITY:
        what = "a global economic crisis" if portfolio.mode == "economy" else "a portfolio crash"
        return (
            f"What is the probability of {what} on the next trading day? "
            "End your answer with a final line of the form \"Probability: <number between 0 and 1>\"."
        )
    raise ValueError(f"unknown prediction mode {mode!r}")


def _ted_block(context: Sequence[tuple[str, float]] | Sequence[float] | None) -> list[str]:
    if not context:
        return []
    lines = ["Recent TED spread values (percentage points), oldest first:"]
    for item in context:
        if isinstance(item, tuple):
            lines.append(f"- {item[0]}: {item[1]}")
        else:
            lines.append(f"- {item}")
    return lines + [""]


def build_reason_prompt(
    portfolio: Portfolio,
    tuples: Sequence[RelationalTuple],
    mode: str = BINARY,
    context: Sequence | None = None,
    *,
    labels: dict[str, str] | None = None,
    model_name: str = "gpt-3.5-turbo",
    temperature: float = 0.0,
) -> ChatRequest:
    """Reasoning prompt over relational tuples, which are rendered in the given order."""
    labels = labels or {}
    parts = [_portfolio_block(portfolio), ""]
    parts.append("Impact tuples, as (date, subject, impacts, object):")
    parts += [_tuple_line(t, labels) for t in tuples] or ["(none)"]
    parts.append("")
    parts += _ted_block(context)
    parts.append(
        "Reason only from the tuples given above. Do not rely on any knowledge of what "
        "historically happened around these dates; explain your answer using the impacts listed."
    )
    parts.append(_answer_instruction(mode, portfolio))
    return _request("\n".join(parts), model_name, temperature)


STEP_BY_STEP = "Let's think step-by-step."


def truncate_headlines(headlines: Sequence[str], token_budget: int) -> list[str]:
    """Keep the newest headlines whose whitespace-token total fits the budget."""
    kept: list[str] = []
    used = 0
    for h in reversed(headlines):
        n = len(h.split())
        if used + n > token_budget:
            break
        kept.append(h)
        used += n
    kept.reverse()
    return kept


def build_baseline_prompt(
    headlines: Sequence[str],
    portfolio: Portfolio,
    variant: str = "io",
    *,
    mode: str = BINARY,
    context: Sequence | None = None,
    token_budget: int = 3000,
    model_name: str = "gpt-3.5-turbo",
    temperature: float = 0.0,
) -> ChatRequest:
    if not headlines:
        raise ValueError("baseline prompt needs at least one headline")
    if variant not in ("io", "cot"):
        raise ValueError(f"unknown baseline variant {variant!r}")
    kept = truncate_headlines(headlines, token_budget)
    parts = [_portfolio_block(portfolio), "", "Today's news headlines:"]
    parts += [f"- {h}" for h in kept] or ["(none)"]
    parts.append("")
    parts += _ted_block(context)
    parts.append(_answer_instruction(mode, portfolio))
    if variant == "cot":
        parts.append(STEP_BY_STEP)
    return _request("\n".join(parts), model_name, temperature)


# ---------------------------------------------------------------------------
# parsers

@dataclass(frozen=True)
class BrainstormItem:
    entity: str
    explanation: str = ""


@dataclass(frozen=True)
class BrainstormReply:
    items: tuple[BrainstormItem, ...]

    def render(self) -> str:
        return "\n".join(
            f"{i}. {it.entity}" + (f" | {it.explanation}" if it.explanation else "")
            for i, it in enumerate(self.items, 1)
        )


_NUMBERED = re.compile(r"^\s*\d+\s*[.):]\s*(.+?)\s*$")


def parse_brainstorm(raw: str, k: int) -> BrainstormReply:
    items: list[BrainstormItem] = []
    for line in raw.splitlines():
        m = _NUMBERED.match(line)
        if not m:
            continue
        entity, _, explanation = m.group(1).partition("|")
        try:
            key = normalize_entity(entity.replace("*", ""))
        except InvalidEntityError:
            continue
        items.append(BrainstormItem(key, explanation.strip()))
    if not items:
        raise ParseError("no numbered 'Entity | Explanation' lines in response", raw)
    return BrainstormReply(tuple(items[:k]))


@dataclass(frozen=True)
class PredictionReply:
    verdict: str | None = None  # "crash" / "no_crash"
    probability: float | None = None
    explanation: str = ""
    clamped: bool = False

    @property
    def score(self) -> float:
        if self.probability is not None:
            return self.probability
        return 1.0 if self.verdict == "crash" else 0.0


_PREDICTION = re.compile(r"prediction\s*\**\s*:\s*\**\s*(yes|no)\b", re.IGNORECASE)
_PROBABILITY = re.compile(
    r"probability\s*\**\s*:\s*\**\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(%?)", re.IGNORECASE
)


def parse_prediction(raw: str, mode: str = BINARY) -> PredictionReply:
    """Pull the final verdict (binary) or probability out of a reasoning reply.

    The last marker in the text wins. Probabilities are clamped into [0, 1].
    """
    if mode == BINARY:
        hits = _PREDICTION.findall(raw)
        if not hits:
            raise ParseError("no 'Prediction: Yes/No' marker in response", raw)
        verdict = "crash" if hits[-1].lower() == "yes" else "no_crash"
        return PredictionReply(verdict=verdict, explanation=raw.strip())
    if mode == PROBABILITY:
        hits = _PROBABILITY.findall(raw)
        if not hits:
            raise ParseError("no 'Probability: x' marker in response", raw)
        number, percent = hits[-1]
        value = float(number) / (100.0 if percent else 1.0)
        clamped = min(1.0, max(0.0, value))
        return PredictionReply(probability=clamped, explanation=raw.strip(), clamped=clamped != value)
    raise ValueError(f"unknown prediction mode {mode!r}")
