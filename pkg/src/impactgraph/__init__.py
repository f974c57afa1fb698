"""Temporal impact graphs from daily news, with LLM-based crash and crisis prediction."""

from .core import (
    ImpactChain,
    ImpactEdge,
    ImpactGraph,
    NewsArticle,
    Portfolio,
    RelationalTuple,
    Stock,
    Vertex,
    chains_to_subgraph,
    enumerate_chains,
    merge_vertex,
    normalize_entity,
)

__all__ = [
    "ImpactChain",
    "ImpactEdge",
    "ImpactGraph",
    "NewsArticle",
    "Portfolio",
    "RelationalTuple",
    "Stock",
    "Vertex",
    "chains_to_subgraph",
    "enumerate_chains",
    "merge_vertex",
    "normalize_entity",
]

__version__ = "0.1.0"
