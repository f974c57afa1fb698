"""Per-entity archive of past impact chains and exponential retention."""

from __future__ import annotations

import bisect
import datetime as dt
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .core import (
    ENTITY,
    ImpactChain,
    ImpactEdge,
    ImpactGraph,
    Portfolio,
    Vertex,
    enumerate_chains,
    enumerate_partial_chains,
)

FORMAT_VERSION = 1


class StoreError(RuntimeError):
    """Misuse of the memory bank, e.g. storing the same day twice."""


class RestoreError(ValueError):
    """A snapshot file could not be read back."""


@dataclass(frozen=True)
class DecayConfig:
    lambda_: float = 1.0
    enabled: bool = True
    unit: str = "trading"  # "trading" or "calendar"

    def __post_init__(self) -> None:
        if not self.lambda_ > 0:
            raise ValueError("lambda must be positive")
        if self.unit not in ("trading", "calendar"):
            raise ValueError(f"unknown decay unit {self.unit!r}")


def elapsed_steps(
    start: dt.date, end: dt.date, unit: str = "trading", trading_days: Sequence[dt.date] | None = None
) -> int:
    """Number of time steps from ``start`` to ``end``.

    In trading mode a step is one day present in ``trading_days`` (sorted);
    without a calendar, or in calendar mode, plain day difference is used.
    """
    if start > end:
        raise ValueError(f"edge day {start} is after {end}")
    if unit == "calendar" or not trading_days:
        return (end - start).days
    # days in (start, end]
    return bisect.bisect_right(trading_days, end) - bisect.bisect_right(trading_days, start)


def retention(
    cfg: DecayConfig, edge: ImpactEdge, today: dt.date, trading_days: Sequence[dt.date] | None = None
) -> float:
    if edge.day > today:
        raise ValueError(f"edge day {edge.day} is after {today}")
    if not cfg.enabled:
        return 1.0
    steps = elapsed_steps(edge.day, today, cfg.unit, trading_days)
    return math.exp(-steps / cfg.lambda_)


@dataclass
class MemoryBank:
    entries: dict[str, list[ImpactChain]] = field(default_factory=dict)
    current_day: dt.date | None = None
    labels: dict[Vertex, str] = field(default_factory=dict)
    cap: int = 200

    def size(self) -> int:
        return sum(len(v) for v in self.entries.values())

    def chains_for(self, key: str) -> list[ImpactChain]:
        return list(self.entries.get(key, ()))


def retrieve(bank: MemoryBank, daily_graph: ImpactGraph, *, enabled: bool = True) -> ImpactGraph:
    """Union the day's graph with every stored chain that shares one of its entities.

    ``enabled=False`` returns a copy of the day's graph unchanged.
    """
    out = daily_graph.copy()
    if not enabled:
        return out
    for v in daily_graph.of_kind(ENTITY):
        for chain in bank.entries.get(v.key, ()):
            for u in chain.path:
                out.add_vertex(u, bank.labels.get(u))
            for e in chain.edges():
                out.add_edge(e)
    return out


def store(bank: MemoryBank, daily_graph: ImpactGraph, portfolio: Portfolio, day: dt.date) -> MemoryBank:
    """File every complete and partial chain of the day under each entity it passes through."""
    if bank.current_day is not None and day <= bank.current_day:
        raise StoreError(f"memory already stored through {bank.current_day}; cannot store {day}")
    for e in daily_graph.edges:
        if e.day > day:
            raise StoreError(f"edge {e} is dated after {day}")
    chains = enumerate_chains(daily_graph, portfolio) + enumerate_partial_chains(daily_graph, portfolio)
    chains.sort(key=ImpactChain.sort_key)
    for chain in chains:
        for v in chain.path:
            if v in daily_graph.labels:
                bank.labels.setdefault(v, daily_graph.labels[v])
            if v.kind != ENTITY:
                continue
            bucket = bank.entries.setdefault(v.key, [])
            bucket.append(chain)
            if len(bucket) > bank.cap:
                del bucket[: len(bucket) - bank.cap]
    bank.current_day = day
    return bank


# ---------------------------------------------------------------------------
# persistence

def _vertex_json(v: Vertex) -> list[str]:
    return [v.kind, v.key]


def _chain_json(c: ImpactChain) -> dict:
    return {"path": [_vertex_json(v) for v in c.path], "edge_days": [d.isoformat() for d in c.edge_days]}


def snapshot(bank: MemoryBank, path: str | Path) -> Path:
    path = Path(path)
    doc = {
        "format_version": FORMAT_VERSION,
        "current_day": bank.current_day.isoformat() if bank.current_day else None,
        "cap": bank.cap,
        "labels": [[v.kind, v.key, text] for v, text in bank.labels.items()],
        "entries": {k: [_chain_json(c) for c in chains] for k, chains in bank.entries.items()},
    }
    path.write_text(json.dumps(doc, sort_keys=True, indent=1), encoding="utf-8")
    return path


def restore(path: str | Path) -> MemoryBank:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise RestoreError(f"cannot read memory snapshot {path}: {exc}") from None
    version = doc.get("format_version") if isinstance(doc, dict) else None
    if not isinstance(version, int):
        raise RestoreError(f"{path}: missing format_version (expected {FORMAT_VERSION})")
    if version > FORMAT_VERSION:
        raise RestoreError(
            f"{path}: snapshot format_version {version} is newer than supported version {FORMAT_VERSION}"
        )
    try:
        entries = {
            key: [
                ImpactChain(
                    tuple(Vertex(*v) for v in c["path"]),
                    tuple(dt.date.fromisoformat(d) for d in c["edge_days"]),
                )
                for c in chains
            ]
            for key, chains in doc["entries"].items()
        }
        labels = {Vertex(kind, key): text for kind, key, text in doc.get("labels", [])}
        current = doc["current_day"]
        return MemoryBank(
            entries=entries,
            current_day=dt.date.fromisoformat(current) if current else None,
            labels=labels,
            cap=int(doc.get("cap", 200)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise RestoreError(f"{path}: malformed snapshot (format_version {version}): {exc}") from None
