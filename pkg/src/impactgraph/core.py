"""Domain types and pure graph operations for impact graphs."""

from __future__ import annotations

import datetime as dt
import itertools
import string
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Iterator

ARTICLE = "article"
ENTITY = "entity"
STOCK = "stock"
VERTEX_KINDS = (ARTICLE, ENTITY, STOCK)

RELATION = "impacts"

# ASCII punctuation plus the typographic quotes models like to emit.
_STRIP_CHARS = string.punctuation + " ‘’“”–—"


class GraphError(ValueError):
    """Raised when an operation would break a graph invariant."""


class InvalidEntityError(ValueError):
    """Raised when an entity name normalizes to nothing."""


def normalize_entity(raw: str) -> str:
    """Canonical form used for entity identity.

    Lowercases, collapses internal whitespace and strips surrounding
    punctuation. The result is a fixed point of this function.
    """
    text = " ".join(raw.lower().split())
    text = text.strip(_STRIP_CHARS)
    text = " ".join(text.split())
    if not text:
        raise InvalidEntityError(f"entity name is empty after normalization: {raw!r}")
    return text


@dataclass(frozen=True)
class Stock:
    ticker: str
    name: str
    category: str = ""
    aliases: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.ticker.strip():
            raise ValueError("stock ticker must be non-empty")


@dataclass(frozen=True)
class Portfolio:
    name: str
    members: tuple[Stock, ...]
    mode: str = "stock"  # "stock" or "economy"

    def __post_init__(self) -> None:
        if not self.members:
            raise ValueError(f"portfolio {self.name!r} has no members")
        if self.mode not in ("stock", "economy"):
            raise ValueError(f"unknown portfolio mode {self.mode!r}")
        tickers = [m.ticker for m in self.members]
        if len(set(tickers)) != len(tickers):
            raise ValueError(f"portfolio {self.name!r} has duplicate tickers")
        names = [m.name for m in self.members]
        if len(set(names)) != len(names):
            raise ValueError(f"portfolio {self.name!r} has duplicate member names")

    @property
    def tickers(self) -> tuple[str, ...]:
        return tuple(m.ticker for m in self.members)

    def stock_vertices(self) -> list["Vertex"]:
        return [Vertex(STOCK, m.ticker) for m in self.members]


@dataclass(frozen=True)
class NewsArticle:
    id: str
    date: dt.date
    headline: str
    body: str = ""


@dataclass(frozen=True, order=True)
class Vertex:
    kind: str
    key: str

    def __post_init__(self) -> None:
        if self.kind not in VERTEX_KINDS:
            raise GraphError(f"unknown vertex kind {self.kind!r}")
        if not self.key:
            raise GraphError("vertex key must be non-empty")

    def __str__(self) -> str:
        return f"{self.kind}:{self.key}"


@dataclass(frozen=True, order=True)
class ImpactEdge:
    source: Vertex
    target: Vertex
    day: dt.date

    def __post_init__(self) -> None:
        if self.source == self.target:
            raise GraphError(f"self-loop on {self.source}")


@dataclass(frozen=True)
class ImpactChain:
    """One article-rooted path; ``edge_days[i]`` dates the hop path[i] -> path[i+1]."""

    path: tuple[Vertex, ...]
    edge_days: tuple[dt.date, ...]

    def __post_init__(self) -> None:
        if not self.path or self.path[0].kind != ARTICLE:
            raise GraphError("chain must start at an article vertex")
        if len(self.edge_days) != len(self.path) - 1:
            raise GraphError("chain needs exactly one day per hop")
        if len(set(self.path)) != len(self.path):
            raise GraphError("chain revisits a vertex")

    @property
    def reaches_stock(self) -> bool:
        return self.path[-1].kind == STOCK

    def edges(self) -> Iterator[ImpactEdge]:
        for (u, v), day in zip(zip(self.path, self.path[1:]), self.edge_days):
            yield ImpactEdge(u, v, day)

    def sort_key(self) -> tuple:
        return (tuple((v.key, v.kind) for v in self.path), self.edge_days)


@dataclass(frozen=True, order=True)
class RelationalTuple:
    t: dt.date
    subject: str
    object: str
    relation: str = RELATION

    def __post_init__(self) -> None:
        if self.relation != RELATION:
            raise ValueError(f"relation must be {RELATION!r}, got {self.relation!r}")


@dataclass
class ImpactGraph:
    """Directed multigraph of impacts.

    Vertices and edges keep insertion order. Parallel edges between the same
    pair are allowed when their days differ. ``labels`` holds display text
    (headline for articles, company name for stocks) and is not part of
    vertex identity.
    """

    vertices: dict[Vertex, None] = field(default_factory=dict)
    edges: dict[ImpactEdge, None] = field(default_factory=dict)
    labels: dict[Vertex, str] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.vertices)

    def __contains__(self, v: object) -> bool:
        return v in self.vertices

    def add_vertex(self, v: Vertex, label: str | None = None) -> Vertex:
        if v not in self.vertices:
            self.vertices[v] = None
        if label and v not in self.labels:
            self.labels[v] = label
        return v

    def add_edge(self, edge: ImpactEdge) -> bool:
        """Insert ``edge``; returns False if it was already present."""
        for end in (edge.source, edge.target):
            if end not in self.vertices:
                raise GraphError(f"edge endpoint {end} is not in the graph")
        if edge in self.edges:
            return False
        self.edges[edge] = None
        return True

    def label(self, v: Vertex) -> str:
        return self.labels.get(v, v.key)

    def successors(self, v: Vertex) -> list[Vertex]:
        return list(dict.fromkeys(e.target for e in self.edges if e.source == v))

    def adjacency(self) -> dict[Vertex, dict[Vertex, list[dt.date]]]:
        """Map source -> target -> sorted list of edge days."""
        adj: dict[Vertex, dict[Vertex, list[dt.date]]] = {v: {} for v in self.vertices}
        for e in self.edges:
            adj[e.source].setdefault(e.target, []).append(e.day)
        for targets in adj.values():
            for days in targets.values():
                days.sort()
        return adj

    def in_degree(self) -> dict[Vertex, int]:
        deg = {v: 0 for v in self.vertices}
        for e in self.edges:
            deg[e.target] += 1
        return deg

    def of_kind(self, kind: str) -> list[Vertex]:
        return [v for v in self.vertices if v.kind == kind]

    def copy(self) -> "ImpactGraph":
        return ImpactGraph(dict(self.vertices), dict(self.edges), dict(self.labels))

    def union(self, other: "ImpactGraph") -> "ImpactGraph":
        out = self.copy()
        for v in other.vertices:
            out.add_vertex(v, other.labels.get(v))
        for e in other.edges:
            out.add_edge(e)
        return out

    def is_subgraph_of(self, other: "ImpactGraph") -> bool:
        return set(self.vertices) <= set(other.vertices) and set(self.edges) <= set(other.edges)

    def same_shape(self, other: "ImpactGraph") -> bool:
        return set(self.vertices) == set(other.vertices) and set(self.edges) == set(other.edges)

    def check(self) -> None:
        """Raise GraphError if any structural invariant is violated."""
        for e in self.edges:
            if e.source not in self.vertices or e.target not in self.vertices:
                raise GraphError(f"dangling edge {e}")
            if e.source == e.target:
                raise GraphError(f"self-loop {e}")

    # serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "vertices": [
                {"kind": v.kind, "key": v.key, **({"label": self.labels[v]} if v in self.labels else {})}
                for v in self.vertices
            ],
            "edges": [
                {
                    "from": [e.source.kind, e.source.key],
                    "to": [e.target.kind, e.target.key],
                    "day": e.day.isoformat(),
                }
                for e in self.edges
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ImpactGraph":
        g = cls()
        for item in data["vertices"]:
            g.add_vertex(Vertex(item["kind"], item["key"]), item.get("label"))
        for item in data["edges"]:
            g.add_edge(
                ImpactEdge(
                    Vertex(*item["from"]),
                    Vertex(*item["to"]),
                    dt.date.fromisoformat(item["day"]),
                )
            )
        return g


def merge_vertex(graph: ImpactGraph, v: Vertex, label: str | None = None) -> ImpactGraph:
    """Add ``v`` unless a vertex with the same (kind, key) already exists."""
    graph.add_vertex(v, label)
    return graph


def simple_vertex_paths(
    graph: ImpactGraph, targets: set[Vertex], *, partial: bool = False
) -> list[tuple[Vertex, ...]]:
    """Simple paths from each article to any vertex in ``targets``.

    With ``partial=True`` also yields maximal paths that end at a non-stock
    vertex with no unvisited successor. Parallel edges are not distinguished.
    """
    adj = graph.adjacency()
    out: list[tuple[Vertex, ...]] = []

    def walk(path: list[Vertex], on_path: set[Vertex]) -> None:
        here = path[-1]
        if here in targets:
            out.append(tuple(path))
        extended = False
        for nxt in sorted(adj[here]):
            if nxt in on_path:
                continue
            extended = True
            path.append(nxt)
            on_path.add(nxt)
            walk(path, on_path)
            on_path.discard(nxt)
            path.pop()
        if partial and not extended and len(path) > 1 and here.kind != STOCK and here not in targets:
            out.append(tuple(path))

    for article in sorted(graph.of_kind(ARTICLE)):
        walk([article], {article})
    return out


def _expand_parallel(graph: ImpactGraph, paths: Iterable[tuple[Vertex, ...]]) -> list[ImpactChain]:
    adj = graph.adjacency()
    chains = []
    for path in paths:
        hops = [adj[u][v] for u, v in zip(path, path[1:])]
        for days in itertools.product(*hops):
            chains.append(ImpactChain(path, tuple(days)))
    chains.sort(key=ImpactChain.sort_key)
    return chains


def enumerate_chains(graph: ImpactGraph, portfolio: Portfolio) -> list[ImpactChain]:
    """All simple article-to-portfolio-stock paths, one chain per choice of parallel edge.

    Ordered lexicographically by the vertex keys along the path, then by
    edge days.
    """
    targets = {v for v in portfolio.stock_vertices() if v in graph}
    if not targets:
        return []
    return _expand_parallel(graph, simple_vertex_paths(graph, targets))


def enumerate_partial_chains(graph: ImpactGraph, portfolio: Portfolio) -> list[ImpactChain]:
    """Maximal article-rooted simple paths that cannot be extended and never reach a stock."""
    targets = {v for v in portfolio.stock_vertices() if v in graph}
    paths = [p for p in simple_vertex_paths(graph, targets, partial=True) if p[-1] not in targets]
    return _expand_parallel(graph, paths)


def chains_to_subgraph(chains: Iterable[ImpactChain], labels: dict[Vertex, str] | None = None) -> ImpactGraph:
    g = ImpactGraph()
    labels = labels or {}
    for chain in chains:
        for v in chain.path:
            g.add_vertex(v, labels.get(v))
        for e in chain.edges():
            g.add_edge(e)
    return g


def article_levels(graph: ImpactGraph) -> dict[Vertex, int]:
    """Shortest hop distance from any article vertex (articles are level 0)."""
    levels = {v: 0 for v in graph.of_kind(ARTICLE)}
    adj = graph.adjacency()
    queue = deque(sorted(levels))
    while queue:
        u = queue.popleft()
        for v in sorted(adj[u]):
            if v not in levels:
                levels[v] = levels[u] + 1
                queue.append(v)
    return levels
