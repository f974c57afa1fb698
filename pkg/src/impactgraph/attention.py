"""Retention-weighted PageRank and top-q chain filtering."""

from __future__ import annotations

import datetime as dt
import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .core import ENTITY, ImpactEdge, ImpactGraph, Portfolio, Vertex, simple_vertex_paths
from .memory import DecayConfig, elapsed_steps

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RankConfig:
    q: int = 6
    damping: float = 0.85
    tolerance: float = 1e-8
    max_iter: int = 200

    def __post_init__(self) -> None:
        if self.q < 1:
            raise ValueError("q must be >= 1")
        if not 0.0 < self.damping < 1.0:
            raise ValueError("damping must lie in (0, 1)")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass
class RankTable:
    scores: dict[Vertex, float]
    iterations_used: int
    converged: bool
    mass_trace: list[float] = field(default_factory=list)

    def by_key(self, kind: str = ENTITY) -> dict[str, float]:
        return {v.key: s for v, s in self.scores.items() if v.kind == kind}


def retention_matrix(
    graph: ImpactGraph,
    order: Sequence[Vertex],
    decay: DecayConfig,
    today: dt.date,
    trading_days: Sequence[dt.date] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Column-stochastic-before-decay transfer matrix and out-degree vector.

    ``W[v, b] = R(b, v) / L_b`` where ``L_b`` counts distinct children of
    ``b`` and ``R`` uses the newest edge from ``b`` to ``v``.
    """
    index = {v: i for i, v in enumerate(order)}
    n = len(order)
    newest: dict[tuple[int, int], dt.date] = {}
    for e in graph.edges:
        pair = (index[e.source], index[e.target])
        if pair not in newest or e.day > newest[pair]:
            newest[pair] = e.day
    out_deg = np.zeros(n)
    for b, _ in newest:
        out_deg[b] += 1
    w = np.zeros((n, n))
    for (b, v), day in newest.items():
        if day > today:
            raise ValueError(f"edge dated {day} is after {today}")
        r = 1.0
        if decay.enabled:
            r = float(np.exp(-elapsed_steps(day, today, decay.unit, trading_days) / decay.lambda_))
        w[v, b] = r / out_deg[b]
    return w, out_deg


def rank(
    graph: ImpactGraph,
    decay: DecayConfig,
    today: dt.date,
    cfg: RankConfig = RankConfig(),
    *,
    trading_days: Sequence[dt.date] | None = None,
    on_iteration: Callable[[np.ndarray], None] | None = None,
) -> RankTable:
    """Damped power iteration with retention-weighted transfers.

    Mass that is not transferred, either because a vertex has no children
    or because retention is below one, is spread uniformly over all
    vertices, so scores always sum to one.
    """
    if not len(graph):
        raise ValueError("cannot rank an empty graph")
    order = sorted(graph.vertices)
    n = len(order)
    w, _ = retention_matrix(graph, order, decay, today, trading_days)
    d = cfg.damping
    x = np.full(n, 1.0 / n)
    trace = [float(x.sum())]
    converged = False
    used = 0
    for used in range(1, cfg.max_iter + 1):
        inflow = w @ x
        leaked = x.sum() - inflow.sum()
        new = (1.0 - d) / n + d * (inflow + leaked / n)
        delta = float(np.abs(new - x).sum())
        x = new
        trace.append(float(x.sum()))
        if on_iteration is not None:
            on_iteration(x.copy())
        if delta < cfg.tolerance:
            converged = True
            break
    if not converged:
        log.warning("rank did not converge in %d iterations", cfg.max_iter)
    return RankTable({v: float(s) for v, s in zip(order, x)}, used, converged, trace)


def select_top_q(table: RankTable, graph: ImpactGraph, q: int) -> list[str]:
    """Keys of the q best-scored entity vertices, ties broken by key."""
    # rounding keeps float noise from breaking ties between symmetric vertices
    pool = [(round(table.scores[v], 12), v.key) for v in graph.vertices if v.kind == ENTITY]
    pool.sort(key=lambda t: (-t[0], t[1]))
    return [key for _, key in pool[:q]]


def filter_chains(graph: ImpactGraph, top: Iterable[str], portfolio: Portfolio) -> ImpactGraph:
    """Sub-graph made of every article-to-stock chain that passes through a top entity.

    Works on vertex paths; all parallel (multi-day) edges along a kept path
    are included, which equals the union over every per-day chain variant.
    """
    top = set(top)
    targets = {v for v in portfolio.stock_vertices() if v in graph}
    out = ImpactGraph()
    if not top or not targets:
        return out
    adj = graph.adjacency()
    for path in simple_vertex_paths(graph, targets):
        if not any(v.kind == ENTITY and v.key in top for v in path):
            continue
        for v in path:
            out.add_vertex(v, graph.labels.get(v))
        for u, v in zip(path, path[1:]):
            for day in adj[u][v]:
                out.add_edge(ImpactEdge(u, v, day))
    return out
