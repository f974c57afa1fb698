"""Daily expansion of news articles into an impact graph."""

from __future__ import annotations

import datetime as dt
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

from .core import (
    ARTICLE,
    ENTITY,
    STOCK,
    ImpactEdge,
    ImpactGraph,
    InvalidEntityError,
    NewsArticle,
    Portfolio,
    Stock,
    Vertex,
    merge_vertex,
    normalize_entity,
)
from .llm import Backend, ParseError, Transcript, build_brainstorm_prompt, parse_brainstorm

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExpansionConfig:
    k: int = 3
    max_iterations: int = 4
    body_char_cap: int = 2000

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.body_char_cap < 0:
            raise ValueError("body_char_cap must be >= 0")


def _match_keys(stock: Stock) -> set[str]:
    keys = set()
    for raw in (stock.ticker, stock.name, *stock.aliases):
        try:
            keys.add(normalize_entity(raw))
        except InvalidEntityError:
            pass
    return keys


def stock_alias_match(entity_key: str, portfolio: Portfolio) -> Stock | None:
    """First portfolio member whose ticker, name or alias normalizes to ``entity_key``."""
    for member in portfolio.members:
        if entity_key in _match_keys(member):
            return member
    return None


def expand_day(
    articles: Sequence[NewsArticle],
    portfolio: Portfolio,
    cfg: ExpansionConfig,
    backend: Backend,
    *,
    transcript: Transcript | None = None,
    workers: int = 1,
    model_name: str = "gpt-3.5-turbo",
    temperature: float = 0.0,
) -> ImpactGraph:
    """Grow one day's impact graph from its articles.

    Every frontier vertex is prompted once per iteration; returned entities
    are merged by normalized key, and entities naming a portfolio member
    become stock vertices, which are never expanded. Transport errors
    propagate so the caller can abort the day.
    """
    graph = ImpactGraph()
    if not articles:
        return graph
    days = {a.date for a in articles}
    if len(days) != 1:
        raise ValueError(f"articles span several days: {sorted(days)}")
    day: dt.date = days.pop()

    by_vertex: dict[Vertex, NewsArticle] = {}
    chain_of: dict[Vertex, tuple[str, ...]] = {}
    frontier: list[Vertex] = []
    for art in articles:
        v = Vertex(ARTICLE, art.id)
        merge_vertex(graph, v, art.headline)
        by_vertex[v] = art
        chain_of[v] = (art.headline,)
        frontier.append(v)
    scheduled = set(frontier)

    def request_for(v: Vertex):
        if v.kind == ARTICLE:
            art = by_vertex[v]
            return build_brainstorm_prompt(
                v, art.headline, portfolio, cfg.k, body=art.body, body_char_cap=cfg.body_char_cap,
                model_name=model_name, temperature=temperature,
            )
        return build_brainstorm_prompt(
            v, v.key, portfolio, cfg.k, chain=chain_of[v], model_name=model_name, temperature=temperature
        )

    for iteration in range(1, cfg.max_iterations + 1):
        if not frontier:
            break
        requests = [request_for(v) for v in frontier]
        if workers > 1 and len(requests) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                replies = list(pool.map(backend.complete, requests))
        else:
            replies = [backend.complete(r) for r in requests]

        next_frontier: list[Vertex] = []
        for v, req, raw in zip(frontier, requests, replies):
            if transcript is not None:
                transcript.add(
                    day=day.isoformat(), stage="brainstorm", iteration=iteration, source=str(v),
                    prompt_digest=req.digest, prompt=req.messages[-1][1], raw_response=raw,
                )
            try:
                reply = parse_brainstorm(raw, cfg.k)
            except ParseError as exc:
                log.warning("%s: unparseable brainstorm reply for %s: %s", day, v, exc)
                continue
            for item in reply.items:
                stock = stock_alias_match(item.entity, portfolio)
                if stock is not None:
                    child, label = Vertex(STOCK, stock.ticker), stock.name
                else:
                    child, label = Vertex(ENTITY, item.entity), None
                if child == v:
                    continue
                merge_vertex(graph, child, label)
                graph.add_edge(ImpactEdge(v, child, day))
                if child.kind == ENTITY and child not in scheduled:
                    scheduled.add(child)
                    chain_of[child] = chain_of[v] + (child.key,)
                    next_frontier.append(child)
        frontier = next_frontier
    return graph
