"""Small builders shared by the tests."""

from __future__ import annotations

import datetime as dt
import json
import re
from pathlib import Path

from impactgraph.core import NewsArticle
from impactgraph.llm import ChatRequest


def article(day: dt.date, n: int, headline: str, body: str = "") -> NewsArticle:
    return NewsArticle(f"{day.isoformat()}-{n:04d}", day, headline, body)


class TableBackend:
    """Answers by looking at the last message: a callable decides the reply."""

    def __init__(self, rule):
        self.rule = rule
        self.calls: list[ChatRequest] = []

    def complete(self, request: ChatRequest) -> str:
        self.calls.append(request)
        return self.rule(request.messages[-1][1])


MINI_WORLD = {
    "Lender halts subprime loans": ["Mortgage industry", "Credit markets"],
    "Housing slump deepens": ["Mortgage industry"],
    "Carmaker recalls vehicles": ["Auto parts suppliers"],
    "mortgage industry": ["HSBC Holdings plc"],
    "credit markets": ["Hedge funds"],
    "hedge funds": ["HSBC"],
    "auto parts suppliers": ["Toyota"],
}

MINI_DAYS = {
    "2007-07-23": ["Lender halts subprime loans"],
    "2007-07-24": ["Housing slump deepens", "Carmaker recalls vehicles"],
    "2007-07-25": ["Carmaker recalls vehicles"],
}


def mini_rule(text: str) -> str:
    """Brainstorm from MINI_WORLD; predict a crash when a tuple reaches HSBC."""
    m = re.search(r"^(?:News headline|Impacted entity): (.+)$", text, re.M)
    if m:
        kids = MINI_WORLD.get(m.group(1), [])
        return "\n".join(f"{i}. {k} | spillover" for i, k in enumerate(kids, 1)) or "None."
    if "Probability:" in text:
        return "Probability: 0.7" if "HSBC" in text else "Probability: 0.2"
    return "Prediction: Yes" if "HSBC Holdings plc)" in text.split("Impact tuples")[-1] else "Prediction: No"


def write_mini(dest: Path) -> dict[str, Path]:
    dest.mkdir(parents=True, exist_ok=True)
    corpus = dest / "corpus.jsonl"
    corpus.write_text("".join(
        json.dumps({"date": d, "headline": h}) + "\n" for d, heads in MINI_DAYS.items() for h in heads
    ))
    prices = dest / "prices.csv"
    closes = {"2007-07-20": 100.0, "2007-07-23": 100.0, "2007-07-24": 97.0, "2007-07-25": 98.0, "2007-07-26": 95.0}
    prices.write_text("date,ticker,close\n" + "".join(f"{d},AAPL,{c}\n" for d, c in closes.items()))
    portfolio = dest / "portfolio.yaml"
    portfolio.write_text(
        "name: mini\nmembers:\n"
        "  - {ticker: HSBC, name: HSBC Holdings plc, category: Banking, aliases: [hsbc]}\n"
        "  - {ticker: TM, name: Toyota Motor Corporation, category: Automotive, aliases: [toyota]}\n"
        "  - {ticker: AAPL, name: Apple Inc., category: Technology, aliases: [apple]}\n"
    )
    return {"corpus": corpus, "prices": prices, "portfolio": portfolio}


NODE = re.compile(r'^  "([^"]+)" \[label="([^"]*)", shape=\w+, width=([\d.]+), height=[\d.]+, indegree=(\d+)\];$')
EDGE = re.compile(r'^  "([^"]+)" -> "([^"]+)" \[label="(\d{4}-\d\d-\d\d)"\];$')


def parse_dot(text):
    """DOT text back into {node id: (label, width, in-degree)} and (source, target, day) edges."""
    nodes, edges = {}, []
    for line in text.splitlines():
        if m := NODE.match(line):
            nodes[m[1]] = (m[2], float(m[3]), int(m[4]))
        elif m := EDGE.match(line):
            edges.append((m[1], m[2], m[3]))
    return nodes, edges
