"""Tuple serialization of the filtered graph and the day's prediction."""

from __future__ import annotations

import datetime as dt
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

from .core import ImpactGraph, Portfolio, RelationalTuple, article_levels
from .llm import (
    BINARY,
    PROBABILITY,
    Backend,
    ParseError,
    Transcript,
    build_reason_prompt,
    parse_prediction,
)


@dataclass(frozen=True)
class DayPrediction:
    day: dt.date
    repeat: int
    verdict: str | None = None
    probability: float | None = None
    parse_failed: bool = False
    empty_graph: bool = False
    clamped: bool = False
    stale_years: tuple[int, ...] = ()
    transcript_ref: int | None = None

    @property
    def score(self) -> float:
        if self.probability is not None:
            return self.probability
        return 1.0 if self.verdict == "crash" else 0.0

    def to_dict(self) -> dict:
        return {
            "day": self.day.isoformat(),
            "repeat": self.repeat,
            "verdict": self.verdict,
            "probability": self.probability,
            "score": self.score,
            "parse_failed": self.parse_failed,
            "empty_graph": self.empty_graph,
            "clamped": self.clamped,
            "stale_years": list(self.stale_years),
            "transcript_ref": self.transcript_ref,
        }


def to_tuples(g: ImpactGraph) -> list[RelationalTuple]:
    """One tuple per edge, ordered by subject level, then date, then keys."""
    levels = article_levels(g)
    far = len(g) + 1
    edges = sorted(
        g.edges,
        key=lambda e: (levels.get(e.source, far), e.day, e.source.key, e.target.key, e.source.kind, e.target.kind),
    )
    return [RelationalTuple(e.day, e.source.key, e.target.key) for e in edges]


def display_labels(g: ImpactGraph) -> dict[str, str]:
    return {v.key: g.label(v) for v in g.vertices}


_YEAR = re.compile(r"\b(19\d{2}|20\d{2})\b")


def stale_year_mentions(text: str, window: tuple[dt.date, dt.date]) -> tuple[int, ...]:
    """Years cited in a reply that fall outside the corpus window."""
    lo, hi = window[0].year, window[1].year
    years = sorted({int(y) for y in _YEAR.findall(text)})
    return tuple(y for y in years if y < lo or y > hi)


def _default(day: dt.date, repeat: int, mode: str, **flags) -> DayPrediction:
    if mode == BINARY:
        return DayPrediction(day, repeat, verdict="no_crash", **flags)
    return DayPrediction(day, repeat, probability=0.0, **flags)


def predict_day(
    g: ImpactGraph,
    portfolio: Portfolio,
    mode: str,
    backend: Backend,
    repeats: int = 5,
    *,
    day: dt.date,
    context: Sequence | None = None,
    transcript: Transcript | None = None,
    window: tuple[dt.date, dt.date] | None = None,
    workers: int = 1,
    model_name: str = "gpt-3.5-turbo",
    temperature: float = 0.0,
) -> list[DayPrediction]:
    """Ask for the day's prediction ``repeats`` times over the same prompt.

    An empty graph yields default negatives without calling the backend.
    Unparseable replies also fall back to the negative default, flagged.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    if mode not in (BINARY, PROBABILITY):
        raise ValueError(f"unknown prediction mode {mode!r}")
    if not g.edges:
        return [_default(day, r, mode, empty_graph=True) for r in range(repeats)]

    request = build_reason_prompt(
        portfolio, to_tuples(g), mode, context,
        labels=display_labels(g), model_name=model_name, temperature=temperature,
    )
    return ask_repeatedly(request, mode, backend, repeats, day=day, stage="reason",
                          transcript=transcript, window=window, workers=workers)


def ask_repeatedly(
    request,
    mode: str,
    backend: Backend,
    repeats: int,
    *,
    day: dt.date,
    stage: str,
    transcript: Transcript | None = None,
    window: tuple[dt.date, dt.date] | None = None,
    workers: int = 1,
) -> list[DayPrediction]:
    if workers > 1 and repeats > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            replies = list(pool.map(lambda _: backend.complete(request), range(repeats)))
    else:
        replies = [backend.complete(request) for _ in range(repeats)]

    out = []
    for r, raw in enumerate(replies):
        ref = None
        if transcript is not None:
            ref = len(transcript.records)
            transcript.add(day=day.isoformat(), stage=stage, repeat=r, prompt_digest=request.digest,
                           prompt=request.messages[-1][1], raw_response=raw)
        stale = stale_year_mentions(raw, window) if window else ()
        try:
            reply = parse_prediction(raw, mode)
        except ParseError:
            out.append(_default(day, r, mode, parse_failed=True, stale_years=stale, transcript_ref=ref))
            continue
        prob = reply.probability
        if prob is not None and not math.isfinite(prob):
            out.append(_default(day, r, mode, parse_failed=True, stale_years=stale, transcript_ref=ref))
            continue
        out.append(DayPrediction(day, r, verdict=reply.verdict, probability=prob, clamped=reply.clamped,
                                 stale_years=stale, transcript_ref=ref))
    return out
