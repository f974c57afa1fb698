"""Corpus and market-data ingestion, crash and crisis labels."""

from __future__ import annotations

import bisect
import csv
import datetime as dt
import json
import logging
from collections import defaultdict
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import yaml

from .core import NewsArticle, Portfolio, Stock

log = logging.getLogger(__name__)

CRASH = "crash"
CRISIS = "crisis"


class DataError(ValueError):
    """Malformed input data; the message names the file and line."""


@dataclass(frozen=True)
class PriceSeries:
    ticker: str
    rows: tuple[tuple[dt.date, float], ...]

    def __post_init__(self) -> None:
        days = [d for d, _ in self.rows]
        if any(a >= b for a, b in zip(days, days[1:])):
            raise DataError(f"{self.ticker}: price days must be strictly increasing")
        for d, close in self.rows:
            if not close > 0:
                raise DataError(f"{self.ticker}: nonpositive close {close} on {d}")


@dataclass(frozen=True)
class LabelSeries:
    rows: tuple[tuple[dt.date, int], ...]
    kind: str = CRASH

    def __post_init__(self) -> None:
        days = [d for d, _ in self.rows]
        if any(a >= b for a, b in zip(days, days[1:])):
            raise DataError("label days must be strictly increasing")

    @property
    def days(self) -> list[dt.date]:
        return [d for d, _ in self.rows]

    def as_dict(self) -> dict[dt.date, int]:
        return dict(self.rows)


@dataclass(frozen=True)
class TedSeries:
    rows: tuple[tuple[dt.date, float], ...]

    def __post_init__(self) -> None:
        days = [d for d, _ in self.rows]
        if any(a >= b for a, b in zip(days, days[1:])):
            raise DataError("TED days must be strictly increasing")

    def window(self, day: dt.date, n: int = 5) -> list[tuple[str, float]]:
        """The last ``n`` observations on or before ``day``."""
        days = [d for d, _ in self.rows]
        hi = bisect.bisect_right(days, day)
        return [(d.isoformat(), v) for d, v in self.rows[max(0, hi - n):hi]]


def _parse_day(text: str, where: str) -> dt.date:
    try:
        return dt.date.fromisoformat(str(text).strip())
    except ValueError:
        raise DataError(f"{where}: invalid date {text!r}") from None


def load_corpus(path: str | Path) -> dict[dt.date, list[NewsArticle]]:
    """Read line-delimited JSON articles grouped by day, days ascending.

    Missing ids become ``<date>-<nnnn>`` numbered per day in file order.
    """
    path = Path(path)
    by_day: dict[dt.date, list[NewsArticle]] = defaultdict(list)
    seen: set[str] = set()
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{where}: not valid JSON ({exc.msg})") from None
            if not isinstance(rec, dict):
                raise DataError(f"{where}: expected a JSON object")
            if "date" not in rec:
                raise DataError(f"{where}: missing 'date'")
            if not str(rec.get("headline", "")).strip():
                raise DataError(f"{where}: missing 'headline'")
            day = _parse_day(rec["date"], where)
            art_id = rec.get("id") or f"{day.isoformat()}-{len(by_day[day]) + 1:04d}"
            art_id = str(art_id)
            if art_id in seen:
                raise DataError(f"{where}: duplicate article id {art_id!r}")
            seen.add(art_id)
            by_day[day].append(NewsArticle(art_id, day, str(rec["headline"]).strip(), str(rec.get("body") or "")))
    return {d: by_day[d] for d in sorted(by_day)}


def load_prices(path: str | Path) -> dict[str, PriceSeries]:
    """CSV with header ``date,ticker,close`` (adjusted closes expected)."""
    path = Path(path)
    rows: dict[str, list[tuple[dt.date, float]]] = defaultdict(list)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"date", "ticker", "close"} - set(reader.fieldnames or ())
        if missing:
            raise DataError(f"{path}: missing columns {sorted(missing)}")
        for lineno, rec in enumerate(reader, 2):
            where = f"{path}:{lineno}"
            try:
                close = float(rec["close"])
            except (TypeError, ValueError):
                raise DataError(f"{where}: bad close {rec['close']!r}") from None
            rows[rec["ticker"].strip()].append((_parse_day(rec["date"], where), close))
    return {t: PriceSeries(t, tuple(sorted(r))) for t, r in sorted(rows.items())}


def load_ted(path: str | Path) -> TedSeries:
    """CSV with header ``date,spread`` in percentage points."""
    path = Path(path)
    out = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if not {"date", "spread"} <= set(reader.fieldnames or ()):
            raise DataError(f"{path}: expected columns date,spread")
        for lineno, rec in enumerate(reader, 2):
            where = f"{path}:{lineno}"
            try:
                spread = float(rec["spread"])
            except (TypeError, ValueError):
                raise DataError(f"{where}: bad spread {rec['spread']!r}") from None
            out.append((_parse_day(rec["date"], where), spread))
    return TedSeries(tuple(sorted(out)))


def daily_returns(prices: PriceSeries) -> list[tuple[dt.date, float]]:
    if len(prices.rows) < 2:
        raise DataError(f"{prices.ticker}: need at least two closes for returns")
    out = []
    for (_, prev), (day, close) in zip(prices.rows, prices.rows[1:]):
        if prev <= 0 or close <= 0:
            raise DataError(f"{prices.ticker}: nonpositive close near {day}")
        out.append((day, close / prev - 1.0))
    return out


def portfolio_returns(per_stock: Mapping[str, Sequence[tuple[dt.date, float]]]) -> list[tuple[dt.date, float]]:
    """Equal-weight mean over the tickers that have a return that day."""
    if not per_stock:
        raise DataError("no stock return series given")
    pooled: dict[dt.date, list[float]] = defaultdict(list)
    for ticker in sorted(per_stock):
        for day, r in per_stock[ticker]:
            pooled[day].append(r)
    return [(d, float(np.mean(pooled[d]))) for d in sorted(pooled) if pooled[d]]


def percentile_threshold(returns: Sequence[tuple[dt.date, float]], percentile: float = 5.0) -> float:
    return float(np.percentile([r for _, r in returns], percentile))


def crash_labels(returns: Sequence[tuple[dt.date, float]], threshold: float = -0.02) -> LabelSeries:
    return LabelSeries(tuple((d, int(r <= threshold)) for d, r in returns), CRASH)


def crisis_labels(ted: TedSeries, threshold: float = 0.48) -> LabelSeries:
    return LabelSeries(tuple((d, int(s > threshold)) for d, s in ted.rows), CRISIS)


def align_next_day(labels: LabelSeries, prediction_days: Iterable[dt.date]) -> list[tuple[dt.date, int]]:
    """Pair each prediction day with the label of the next labeled day after it."""
    days = labels.days
    values = [v for _, v in labels.rows]
    out = []
    for day in prediction_days:
        i = bisect.bisect_right(days, day)
        if i >= len(days):
            log.warning("no label after %s; dropping that prediction day", day)
            continue
        out.append((day, values[i]))
    return out


# ---------------------------------------------------------------------------
# portfolios

BUNDLED_PORTFOLIOS = ("country_neutral", "sector_neutral", "economies")


def portfolio_from_dict(doc: dict) -> Portfolio:
    members = tuple(
        Stock(
            ticker=str(m["ticker"]),
            name=str(m["name"]),
            category=str(m.get("category", "")),
            aliases=tuple(str(a) for a in m.get("aliases", ())),
        )
        for m in doc["members"]
    )
    return Portfolio(str(doc["name"]), members, str(doc.get("mode", "stock")))


def load_portfolio(name_or_path: str | Path) -> Portfolio:
    """Load a bundled portfolio by name, or a YAML file by path."""
    text: str
    if str(name_or_path) in BUNDLED_PORTFOLIOS:
        text = resources.files("impactgraph.fixtures").joinpath(f"portfolios/{name_or_path}.yaml").read_text("utf-8")
    else:
        path = Path(name_or_path)
        if not path.is_file():
            raise FileNotFoundError(f"portfolio not found: {name_or_path}")
        text = path.read_text("utf-8")
    try:
        return portfolio_from_dict(yaml.safe_load(text))
    except (KeyError, TypeError) as exc:
        raise DataError(f"malformed portfolio {name_or_path}: {exc}") from None
