"""Synthetic 10-day demo corpus and the rule-based responder that records its fixtures.

The responder stands in for a chat model: it reads the prompt, looks up a
small hand-written impact map and answers in the expected line formats.
Running every pipeline variant through a recording wrapper yields the
scripted fixture files shipped under ``fixtures/demo``.

    python -m impactgraph.synthetic <dest-dir>
"""

from __future__ import annotations

import datetime as dt
import json
import re
import sys
import threading
from pathlib import Path

from .config import RunConfig
from .evaluate import run_baseline, run_experiment, sweep
from .llm import ChatRequest

D = dt.date

ARTICLES = [
    (D(2007, 7, 23), "Subprime lender losses widen as mortgage delinquencies climb",
     "Delinquencies on subprime home loans rose again in June, pushing several lenders deeper into losses."),
    (D(2007, 7, 23), "Oil prices rise on Middle East supply worries", ""),
    (D(2007, 7, 24), "Countrywide cuts profit forecast on housing slump",
     "The largest U.S. mortgage lender said falling home prices would weigh on earnings."),
    (D(2007, 7, 24), "Toyota raises output target on strong hybrid demand", ""),
    (D(2007, 7, 25), "Bear Stearns hedge funds report heavy subprime losses", ""),
    (D(2007, 7, 25), "Apple quarterly profit beats forecasts on iPhone launch", ""),
    (D(2007, 7, 26), "Global stocks slide as credit fears spread", ""),
    (D(2007, 7, 26), "Mining shares fall as metal prices retreat", ""),
    (D(2007, 7, 27), "Banks struggle to sell leveraged buyout debt", ""),
    (D(2007, 7, 30), "Central banks monitor tightening credit conditions", ""),
    (D(2007, 7, 30), "SAP reports steady software licence growth", ""),
    (D(2007, 7, 31), "American Home Mortgage warns it may liquidate", ""),
    (D(2007, 8, 1), "American Home Mortgage closing most operations",
     "The lender said it would shut most of its business after failing to secure funding."),
    (D(2007, 8, 1), "European bank discloses subprime exposure", ""),
    (D(2007, 8, 2), "Asian markets rebound as exporters gain", ""),
    (D(2007, 8, 3), "Bear Stearns says credit market turmoil worst in 20 years", ""),
]

HEADLINE_IMPACTS = {
    "Subprime lender losses widen as mortgage delinquencies climb": ["Mortgage industry", "U.S. housing market"],
    "Oil prices rise on Middle East supply worries": ["Oil prices"],
    "Countrywide cuts profit forecast on housing slump": ["Mortgage Industry", "Banking sector"],
    "Toyota raises output target on strong hybrid demand": ["Toyota Motor Corporation", "Auto industry"],
    "Bear Stearns hedge funds report heavy subprime losses": ["Hedge funds", "Credit markets"],
    "Apple quarterly profit beats forecasts on iPhone launch": ["Apple Inc."],
    "Global stocks slide as credit fears spread": ["Credit markets", "Global equity markets"],
    "Mining shares fall as metal prices retreat": ["Commodity prices"],
    "Banks struggle to sell leveraged buyout debt": ["Banking sector", "Credit markets"],
    "Central banks monitor tightening credit conditions": ["Credit markets", "Interest rates"],
    "SAP reports steady software licence growth": ["SAP SE"],
    "American Home Mortgage warns it may liquidate": ["Mortgage industry", "U.S. housing market"],
    "American Home Mortgage closing most operations": ["Mortgage industry", "Banking sector", "Credit markets"],
    "European bank discloses subprime exposure": ["European banks", "Banking sector"],
    "Asian markets rebound as exporters gain": ["Asian equity markets"],
    "Bear Stearns says credit market turmoil worst in 20 years": ["Credit markets", "Hedge funds", "Banking sector"],
}

STOCK_IMPACTS = {
    "mortgage industry": ["U.S. housing market", "Banking sector"],
    "u.s. housing market": ["Consumer spending", "Mortgage industry"],
    "banking sector": ["Royal Bank of Canada", "HDFC Bank", "Credit markets"],
    "credit markets": ["Banking sector", "Global equity markets", "Interest rates"],
    "global equity markets": ["Apple Inc.", "SAP SE", "Accenture"],
    "hedge funds": ["Credit markets", "Global equity markets"],
    "consumer spending": ["Apple", "Toyota"],
    "oil prices": ["TotalEnergies", "Transportation costs"],
    "transportation costs": ["Toyota Motor Corporation"],
    "commodity prices": ["BHP Group Limited", "TotalEnergies SE"],
    "auto industry": ["Toyota"],
    "interest rates": ["Banking sector", "Consumer spending"],
    "european banks": ["Credit markets", "Banking sector"],
    "asian equity markets": ["NetEase", "Toyota", "HDFC Bank"],
}

ECONOMY_IMPACTS = {
    "mortgage industry": ["U.S. housing market", "Banking sector"],
    "u.s. housing market": ["American economy", "Consumer spending"],
    "banking sector": ["American economy", "European economy", "Credit markets"],
    "credit markets": ["Banking sector", "Global equity markets"],
    "global equity markets": ["American economy", "European economy", "Asian economy"],
    "hedge funds": ["Credit markets"],
    "consumer spending": ["American economy", "Asian economy"],
    "oil prices": ["African economy", "Transportation costs"],
    "transportation costs": ["Asian economy"],
    "commodity prices": ["Australian economy", "African economy"],
    "auto industry": ["Asian economy"],
    "interest rates": ["Banking sector"],
    "european banks": ["European economy"],
    "asian equity markets": ["Asian economy"],
}
# a headline that names a portfolio stock directly still needs an economy-level route
ECONOMY_HEADLINE_OVERRIDES = {
    "Toyota raises output target on strong hybrid demand": ["Auto industry"],
    "Apple quarterly profit beats forecasts on iPhone launch": ["Consumer spending"],
    "SAP reports steady software licence growth": ["European economy"],
}

STRESS = ("credit markets", "hedge funds", "banking sector", "mortgage industry", "u.s. housing market")

# target equal-weight portfolio return per day, in percent
PORTFOLIO_PATH = {
    D(2007, 7, 23): 0.3, D(2007, 7, 24): -1.2, D(2007, 7, 25): 0.4, D(2007, 7, 26): -2.6,
    D(2007, 7, 27): -1.5, D(2007, 7, 30): 0.8, D(2007, 7, 31): -0.9, D(2007, 8, 1): -0.6,
    D(2007, 8, 2): -2.4, D(2007, 8, 3): -2.9, D(2007, 8, 6): 0.4,
}
PRICE_START = D(2007, 7, 20)
# per-ticker offsets in percent; they sum to zero so the mean tracks the target
OFFSETS = {"AAPL": 0.6, "RY": -0.4, "NTES": 0.9, "HDB": -0.5, "AZN": 0.1,
           "TTE": -0.3, "SAP": 0.2, "TM": -0.7, "BHP": 0.4, "ACN": -0.3}
MISSING = {("HDB", D(2007, 7, 27))}

TED = [
    (D(2007, 7, 16), 0.28), (D(2007, 7, 17), 0.29), (D(2007, 7, 18), 0.30), (D(2007, 7, 19), 0.31),
    (D(2007, 7, 20), 0.30), (D(2007, 7, 23), 0.33), (D(2007, 7, 24), 0.36), (D(2007, 7, 25), 0.41),
    (D(2007, 7, 26), 0.47), (D(2007, 7, 27), 0.52), (D(2007, 7, 30), 0.50), (D(2007, 7, 31), 0.46),
    (D(2007, 8, 1), 0.55), (D(2007, 8, 2), 0.61), (D(2007, 8, 3), 0.74), (D(2007, 8, 6), 0.85),
]


def corpus_lines() -> list[str]:
    out = []
    for day, headline, body in ARTICLES:
        rec = {"date": day.isoformat(), "headline": headline}
        if body:
            rec["body"] = body
        out.append(json.dumps(rec, sort_keys=True))
    return out


def price_rows() -> list[tuple[str, str, str]]:
    """``(date, ticker, close)`` rows; a ticker's return on a missing day is skipped.

    With HDB absent on one day the mean over the other nine drifts from the
    target by the HDB offset divided by nine, which stays well clear of the
    crash threshold.
    """
    rows = []
    for ticker, offset in OFFSETS.items():
        close = 100.0
        rows.append((PRICE_START.isoformat(), ticker, f"{close:.6f}"))
        for day, pct in PORTFOLIO_PATH.items():
            if (ticker, day) in MISSING:
                continue
            close *= 1.0 + (pct + offset) / 100.0
            rows.append((day.isoformat(), ticker, f"{close:.6f}"))
    rows.sort()
    return rows


# ---------------------------------------------------------------------------
# responder

def _items(names: list[str], reason: str) -> str:
    return "\n".join(f"{i}. {n} | {reason}" for i, n in enumerate(names, 1))


def _cap(prompt: str) -> int:
    m = re.search(r"at most (\d+)", prompt)
    return int(m.group(1)) if m else 3


def respond(request: ChatRequest) -> str:
    prompt = request.messages[-1][1]
    economy = "Target economies:" in prompt
    if "Impact tuples" in prompt:
        return _respond_reason(prompt)
    if "Today's news headlines:" in prompt:
        return _respond_baseline(prompt)
    k = _cap(prompt)
    m = re.search(r"^News headline: (.+)$", prompt, re.M)
    if m:
        headline = m.group(1).strip()
        names = (ECONOMY_HEADLINE_OVERRIDES.get(headline) if economy else None) or HEADLINE_IMPACTS.get(
            headline, ["Global economy"])
        return "Direct impacts of the news:\n" + _items(names[:k], "directly affected by the event")
    m = re.search(r"^Impacted entity: (.+)$", prompt, re.M)
    if m:
        entity = m.group(1).strip()
        table = ECONOMY_IMPACTS if economy else STOCK_IMPACTS
        names = table.get(entity)
        if not names:
            return "No further impacts."
        return _items(names[:k], f"knock-on effect of changes in {entity}")
    return "No further impacts."


def _is_stress(line: str) -> bool:
    return any(f", {s})" in line or f", {s}, impacts" in line for s in STRESS)


def _respond_reason(prompt: str) -> str:
    tuples = [ln for ln in prompt.splitlines() if ln.startswith("(")]
    latest = max((ln[1:11] for ln in tuples), default="")
    fresh = sum(1 for ln in tuples if ln[1:11] == latest and _is_stress(ln))
    older = sum(1 for ln in tuples if ln[1:11] != latest and _is_stress(ln))
    why = (f"The graph contains {len(tuples)} impacts. {fresh} of today's impacts run through stressed "
           f"credit and housing entities, on top of {older} earlier ones that connect to portfolio holdings.")
    if "Probability:" in prompt:
        p = min(0.95, 0.05 + 0.05 * fresh)
        return f"{why}\nProbability: {p:.2f}"
    verdict = "Yes" if fresh >= 11 else "No"
    return f"{why}\nPrediction: {verdict}"


def _respond_baseline(prompt: str) -> str:
    heads = [ln[2:] for ln in prompt.splitlines() if ln.startswith("- ") and "(" not in ln[:3]]
    worried = sum(any(w in h.lower() for w in ("subprime", "credit", "mortgage")) for h in heads)
    step = "think step-by-step" in prompt
    why = "Considering each headline in turn, " if step else ""
    why += f"{worried} headlines point to financial stress."
    if "Probability:" in prompt:
        return f"{why}\nProbability: {min(0.9, 0.1 + 0.3 * worried):.2f}"
    return f"{why}\nPrediction: {'Yes' if worried >= (1 if step else 2) else 'No'}"


class ResponderBackend:
    """Backend that answers with :func:`respond` and remembers every exchange."""

    def __init__(self, responder=respond):
        self.responder = responder
        self.recorded: dict[str, dict] = {}
        self.calls = 0
        self._lock = threading.Lock()

    def complete(self, request: ChatRequest) -> str:
        text = self.responder(request)
        with self._lock:
            self.calls += 1
            self.recorded[request.digest] = {
                "digest": request.digest,
                "response_text": text,
                "prompt_head": request.messages[-1][1][:120],
            }
        return text

    def fixture_lines(self) -> list[str]:
        return [json.dumps(self.recorded[k], sort_keys=True) for k in sorted(self.recorded)]


LAMBDA_GRID = (0.1, 0.5, 1.0, 2.0, 10.0)
Q_GRID = tuple(range(1, 13))


DEMO_CONFIGS = {
    "crash.yaml": (
        "# Crash detection on the synthetic 10-day corpus with the scripted backend.\n"
        "corpus: corpus.jsonl\nprices: prices.csv\nportfolio: country_neutral\n"
        "backend: scripted:fixtures.jsonl\nmode: crash\n"
        "lambda: 1.0\nq: 6\nk: 3\nmax_iter: 4\nrepeats: 5\nout: runs\n"
    ),
    "macro.yaml": (
        "# Global-crisis probability over regional economies, scripted backend.\n"
        "corpus: corpus.jsonl\nted: ted.csv\nportfolio: economies\n"
        "backend: scripted:macro_fixtures.jsonl\nmode: macro\nrepeats: 5\nout: runs\n"
    ),
}


def write_demo(dest: str | Path) -> Path:
    """Write corpus, prices, TED, run configs and recorded fixtures for every demo variant."""
    dest = Path(dest)
    dest.mkdir(parents=True, exist_ok=True)
    (dest / "corpus.jsonl").write_text("\n".join(corpus_lines()) + "\n", encoding="utf-8", newline="\n")
    (dest / "prices.csv").write_text(
        "date,ticker,close\n" + "".join(",".join(r) + "\n" for r in price_rows()), encoding="utf-8", newline="\n"
    )
    (dest / "ted.csv").write_text(
        "date,spread\n" + "".join(f"{d.isoformat()},{v}\n" for d, v in TED), encoding="utf-8", newline="\n"
    )
    for name, text in DEMO_CONFIGS.items():
        (dest / name).write_text(text, encoding="utf-8", newline="\n")

    base = RunConfig(corpus=dest / "corpus.jsonl", prices=dest / "prices.csv", ted=dest / "ted.csv",
                     backend="scripted:unused")
    crash = ResponderBackend()
    crash_cfg = base.replace(portfolio="country_neutral", mode="crash")
    for variant in ("full", "no_temporal", "no_decay"):
        run_experiment(crash_cfg.replace(ablation=variant), crash)
    for variant in ("io", "cot"):
        run_baseline(variant, crash_cfg, crash)
    sweep("lambda", LAMBDA_GRID, crash_cfg, crash)
    sweep("q", Q_GRID, crash_cfg, crash)
    (dest / "fixtures.jsonl").write_text("\n".join(crash.fixture_lines()) + "\n", encoding="utf-8", newline="\n")

    macro = ResponderBackend()
    macro_cfg = base.replace(portfolio="economies", mode="macro")
    for variant in ("full", "no_temporal", "no_decay"):
        run_experiment(macro_cfg.replace(ablation=variant), macro)
    for variant in ("io", "cot"):
        run_baseline(variant, macro_cfg, macro)
    (dest / "macro_fixtures.jsonl").write_text("\n".join(macro.fixture_lines()) + "\n", encoding="utf-8",
                                                newline="\n")
    return dest


if __name__ == "__main__":
    print(write_demo(sys.argv[1] if len(sys.argv) > 1 else "demo"))
