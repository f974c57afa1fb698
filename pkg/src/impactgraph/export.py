"""DOT and JSON graph exports, and the indicator line plot."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

from .core import ImpactGraph, Vertex


def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"').replace("\n", " ") + '"'


def _node_id(v: Vertex) -> str:
    return _quote(f"{v.kind}:{v.key}")


def top_by_in_degree(graph: ImpactGraph, n: int) -> list[Vertex]:
    deg = graph.in_degree()
    return sorted(graph.vertices, key=lambda v: (-deg[v], v.key, v.kind))[:n]


def node_width(in_degree: int, base: float = 0.3, step: float = 0.25) -> float:
    return round(base + step * in_degree, 4)


def to_dot(graph: ImpactGraph, top_n: int = 5, name: str = "impact_graph") -> str:
    """Render a graph with vertex size proportional to in-degree.

    Only the ``top_n`` vertices with the most incoming edges get a text
    label, to keep dense graphs readable.
    """
    deg = graph.in_degree()
    labelled = set(top_by_in_degree(graph, top_n))
    shapes = {"article": "box", "entity": "circle", "stock": "doublecircle"}
    lines = [f"digraph {name} {{", "  rankdir=LR;", '  node [fixedsize=true, fontsize=10];']
    for v in graph.vertices:
        label = graph.label(v) if v in labelled else ""
        w = node_width(deg[v])
        lines.append(
            f"  {_node_id(v)} [label={_quote(label)}, shape={shapes[v.kind]}, "
            f"width={w}, height={w}, indegree={deg[v]}];"
        )
    for e in graph.edges:
        lines.append(f"  {_node_id(e.source)} -> {_node_id(e.target)} [label={_quote(e.day.isoformat())}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def to_json(graph: ImpactGraph) -> str:
    return json.dumps(graph.to_dict(), indent=1, sort_keys=True) + "\n"


def indicator_svg(
    rows: Sequence[tuple[str, float, int | None]], width: int = 720, height: int = 240, pad: int = 30
) -> str:
    """Line plot of a daily probability with shaded crisis-labelled days."""
    n = len(rows)
    inner_w, inner_h = width - 2 * pad, height - 2 * pad
    step = inner_w / max(n - 1, 1)

    def x(i: int) -> float:
        return round(pad + i * step, 2)

    def y(p: float) -> float:
        return round(pad + (1.0 - p) * inner_h, 2)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="{pad}" y="{pad}" width="{inner_w}" height="{inner_h}" fill="none" stroke="#999"/>',
    ]
    half = round(step / 2, 2)
    for i, (_, _, label) in enumerate(rows):
        if label:
            parts.append(
                f'<rect x="{round(x(i) - half, 2)}" y="{pad}" width="{round(step, 2)}" '
                f'height="{inner_h}" fill="#f4c7c3" opacity="0.6"/>'
            )
    if rows:
        pts = " ".join(f"{x(i)},{y(p)}" for i, (_, p, _) in enumerate(rows))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="#1f4e9c" stroke-width="2"/>')
        parts.append(f'<text x="{pad}" y="{height - 8}" font-size="10">{rows[0][0]}</text>')
        parts.append(
            f'<text x="{width - pad}" y="{height - 8}" font-size="10" text-anchor="end">{rows[-1][0]}</text>'
        )
    parts.append(f'<text x="4" y="{pad + 4}" font-size="10">1.0</text>')
    parts.append(f'<text x="4" y="{height - pad}" font-size="10">0.0</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_text(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8", newline="\n")
    return path
