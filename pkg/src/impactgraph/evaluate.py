"""AUROC scoring, the daily pipeline loop, ablations, baselines and sweeps."""

from __future__ import annotations

import csv
import datetime as dt
import io
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.stats import rankdata

from .attention import RankConfig, filter_chains, rank, select_top_q
from .brainstorm import ExpansionConfig, expand_day
from .config import RunConfig
from .core import ImpactGraph, NewsArticle, Portfolio
from .data import (
    LabelSeries,
    align_next_day,
    crash_labels,
    crisis_labels,
    daily_returns,
    load_corpus,
    load_portfolio,
    load_prices,
    load_ted,
    percentile_threshold,
    portfolio_returns,
)
from .llm import (
    BINARY,
    PROBABILITY,
    Backend,
    FatalHTTPError,
    Transcript,
    TransportError,
    build_baseline_prompt,
    make_backend,
)
from .memory import DecayConfig, MemoryBank, retrieve, store
from .reason import DayPrediction, ask_repeatedly, predict_day

log = logging.getLogger(__name__)


class UndefinedMetricError(ValueError):
    """AUROC needs at least one positive and one negative label."""


class RunFailed(RuntimeError):
    """Too many days were aborted for the run to be meaningful."""


@dataclass(frozen=True)
class ScoredDay:
    day: dt.date
    score: float
    label: int
    flags: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label}")


def auroc_from_arrays(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Mann-Whitney form of the ROC area; tied pairs count one half."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels, dtype=int)
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError(f"need both classes, got {n_pos} positive / {n_neg} negative")
    ranks = rankdata(s, method="average")
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auroc(scored: Sequence[ScoredDay]) -> float:
    return auroc_from_arrays([d.score for d in scored], [d.label for d in scored])


@dataclass
class RunSummary:
    variant: str
    aurocs: list[float | None]
    mean: float | None
    std: float | None
    flags: dict[str, int] = field(default_factory=dict)
    n_days: int = 0
    n_scored: int = 0
    n_positive: int = 0
    aborted_days: list[str] = field(default_factory=list)
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "aurocs": self.aurocs,
            "mean_auroc": self.mean,
            "std_auroc": self.std,
            "flags": dict(sorted(self.flags.items())),
            "n_days": self.n_days,
            "n_scored": self.n_scored,
            "n_positive": self.n_positive,
            "aborted_days": self.aborted_days,
            "params": self.params,
        }


@dataclass
class DayRecord:
    day: dt.date
    status: str  # "ok" or "aborted"
    predictions: list[DayPrediction] = field(default_factory=list)
    error: str | None = None
    top_entities: list[str] = field(default_factory=list)
    graphs: dict[str, ImpactGraph] = field(default_factory=dict)
    rank_converged: bool | None = None
    label: int | None = None

    def to_dict(self) -> dict:
        return {
            "day": self.day.isoformat(),
            "status": self.status,
            "error": self.error,
            "label": self.label,
            "top_entities": self.top_entities,
            "rank_converged": self.rank_converged,
            "graph_sizes": {
                name: {"vertices": len(g.vertices), "edges": len(g.edges)} for name, g in self.graphs.items()
            },
            "predictions": [p.to_dict() for p in self.predictions],
        }


@dataclass
class ExperimentResult:
    summary: RunSummary
    records: list[DayRecord]
    transcript: Transcript
    memory: MemoryBank

    def predictions(self) -> dict[dt.date, list[DayPrediction]]:
        return {r.day: r.predictions for r in self.records if r.status == "ok"}


LabelProvider = Callable[[], LabelSeries]


def build_labels(cfg: RunConfig) -> LabelSeries:
    """Crash labels from the prices file, or crisis labels from the TED file."""
    if cfg.mode == "macro":
        return crisis_labels(load_ted(cfg.ted), cfg.crisis_threshold)
    prices = load_prices(cfg.prices)
    per_stock = {t: daily_returns(p) for t, p in prices.items() if len(p.rows) >= 2}
    returns = portfolio_returns(per_stock)
    threshold = cfg.crash_threshold
    if cfg.crash_percentile is not None:
        threshold = percentile_threshold(returns, cfg.crash_percentile)
    return crash_labels(returns, threshold)


def _std(values: list[float]) -> float:
    return float(np.std(values)) if values else 0.0


def summarize(
    variant: str,
    records: Sequence[DayRecord],
    labels: LabelSeries,
    repeats: int,
    params: dict | None = None,
) -> RunSummary:
    ok = [r for r in records if r.status == "ok"]
    aligned = dict(align_next_day(labels, [r.day for r in ok]))
    for r in records:
        r.label = aligned.get(r.day)
    scored_records = [r for r in ok if r.day in aligned]

    aurocs: list[float | None] = []
    for rep in range(repeats):
        series = []
        for r in scored_records:
            p = r.predictions[rep]
            flags = frozenset(f for f in ("parse_failed", "empty_graph") if getattr(p, f))
            series.append(ScoredDay(r.day, p.score, aligned[r.day], flags))
        try:
            aurocs.append(auroc(series))
        except UndefinedMetricError as exc:
            log.warning("AUROC undefined for repeat %d: %s", rep, exc)
            aurocs.append(None)

    defined = [a for a in aurocs if a is not None]
    flags = {"parse_failed": 0, "empty_graph": 0, "clamped": 0, "stale_year_mentions": 0}
    for r in ok:
        for p in r.predictions:
            flags["parse_failed"] += p.parse_failed
            flags["empty_graph"] += p.empty_graph
            flags["clamped"] += p.clamped
            flags["stale_year_mentions"] += len(p.stale_years)
    flags["rank_not_converged"] = sum(1 for r in ok if r.rank_converged is False)
    return RunSummary(
        variant=variant,
        aurocs=aurocs,
        mean=float(np.mean(defined)) if len(defined) == repeats else None,
        std=_std(defined) if len(defined) == repeats else None,
        flags=flags,
        n_days=len(records),
        n_scored=len(scored_records),
        n_positive=sum(aligned[r.day] for r in scored_records),
        aborted_days=[r.day.isoformat() for r in records if r.status == "aborted"],
        params=params or {},
    )


def _process_day(
    day: dt.date,
    articles: Sequence[NewsArticle],
    cfg: RunConfig,
    portfolio: Portfolio,
    backend: Backend,
    bank: MemoryBank,
    trading_days: Sequence[dt.date],
    context: list | None,
    transcript: Transcript,
    window: tuple[dt.date, dt.date],
) -> DayRecord:
    pred_mode = PROBABILITY if cfg.mode == "macro" else BINARY
    common = dict(model_name=cfg.model_name, temperature=cfg.temperature)

    if cfg.baseline is not None:
        request = build_baseline_prompt(
            [a.headline for a in articles], portfolio, cfg.baseline, mode=pred_mode,
            context=context, token_budget=cfg.token_budget, **common,
        )
        preds = ask_repeatedly(request, pred_mode, backend, cfg.repeats, day=day, stage=f"baseline_{cfg.baseline}",
                               transcript=transcript, window=window, workers=cfg.workers)
        return DayRecord(day, "ok", preds)

    expansion = ExpansionConfig(cfg.k, cfg.max_iterations, cfg.body_char_cap)
    decay = DecayConfig(cfg.lambda_, enabled=cfg.ablation != "no_decay", unit=cfg.decay_unit)
    rank_cfg = RankConfig(cfg.q, cfg.damping, cfg.tolerance, cfg.rank_max_iter)

    daily = expand_day(articles, portfolio, expansion, backend, transcript=transcript, workers=cfg.workers, **common)
    record = DayRecord(day, "ok", graphs={"daily": daily})
    try:
        temporal = retrieve(bank, daily, enabled=cfg.ablation != "no_temporal")
        record.graphs["temporal"] = temporal
        if len(temporal):
            table = rank(temporal, decay, day, rank_cfg, trading_days=trading_days)
            record.rank_converged = table.converged
            record.top_entities = select_top_q(table, temporal, cfg.q)
        trr = filter_chains(temporal, record.top_entities, portfolio)
        record.graphs["trr"] = trr
        record.predictions = predict_day(
            trr, portfolio, pred_mode, backend, cfg.repeats, day=day, context=context,
            transcript=transcript, window=window, workers=cfg.workers, **common,
        )
    finally:
        # the brainstormed graph is valid even if reasoning failed
        store(bank, daily, portfolio, day)
    return record


def run_experiment(
    cfg: RunConfig,
    backend: Backend | None = None,
    *,
    labels: LabelProvider | None = None,
    on_day: Callable[[DayRecord], None] | None = None,
    transcript: Transcript | None = None,
) -> ExperimentResult:
    """Run the daily pipeline over the corpus, then score against next-day labels.

    Labels are requested from ``labels`` only after every day has been
    predicted. ``on_day`` is called as soon as a day's predictions exist.
    """
    backend = backend or make_backend(
        cfg.backend, model_name=cfg.model_name, token_env=cfg.token_env, max_in_flight=cfg.max_in_flight
    )
    portfolio = load_portfolio(cfg.portfolio_name)
    corpus = load_corpus(cfg.corpus)
    trading_days = sorted(corpus)
    window = (trading_days[0], trading_days[-1]) if trading_days else (dt.date.min, dt.date.max)
    ted = load_ted(cfg.ted) if cfg.mode == "macro" else None
    transcript = transcript if transcript is not None else Transcript()
    bank = MemoryBank(cap=cfg.memory_cap)

    records: list[DayRecord] = []
    for day, articles in corpus.items():
        context = ted.window(day, cfg.ted_context_days) if ted is not None else None
        try:
            record = _process_day(day, articles, cfg, portfolio, backend, bank, trading_days,
                                  context, transcript, window)
        except (TransportError, FatalHTTPError) as exc:
            log.error("%s aborted: %s", day, exc)
            record = DayRecord(day, "aborted", error=str(exc))
        records.append(record)
        if on_day is not None:
            on_day(record)

    aborted = sum(r.status == "aborted" for r in records)
    if records and aborted / len(records) > cfg.max_abort_fraction:
        raise RunFailed(f"{aborted} of {len(records)} days aborted")

    label_series = labels() if labels is not None else build_labels(cfg)
    summary = summarize(cfg.variant, records, label_series, cfg.repeats, cfg.params())
    return ExperimentResult(summary, records, transcript, bank)


def run_ablation(variant: str, cfg: RunConfig, backend: Backend | None = None, **kwargs) -> ExperimentResult:
    return run_experiment(cfg.replace(ablation=variant, baseline=None), backend, **kwargs)


def run_baseline(variant: str, cfg: RunConfig, backend: Backend | None = None, **kwargs) -> ExperimentResult:
    return run_experiment(cfg.replace(baseline=variant, ablation="full"), backend, **kwargs)


SWEEPABLE = {"lambda": "lambda_", "q": "q"}


def sweep(
    param: str, values: Iterable[float], cfg: RunConfig, backend: Backend | None = None
) -> list[tuple[float, RunSummary]]:
    if param not in SWEEPABLE:
        raise ValueError(f"can only sweep {sorted(SWEEPABLE)}, not {param!r}")
    values = list(values)
    if not values:
        raise ValueError("sweep needs at least one value")
    field_name = SWEEPABLE[param]
    out = []
    for v in values:
        v = int(v) if field_name == "q" else float(v)
        result = run_experiment(cfg.replace(**{field_name: v}), backend)
        out.append((v, result.summary))
    return out


def _fmt(x: float | None) -> str:
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else repr(x)


def sweep_table(param: str, rows: Sequence[tuple[float, RunSummary]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    repeats = max((len(s.aurocs) for _, s in rows), default=0)
    w.writerow([param, "mean_auroc", "std_auroc", *[f"auroc_{i}" for i in range(repeats)]])
    for value, s in rows:
        w.writerow([value, _fmt(s.mean), _fmt(s.std), *[_fmt(a) for a in s.aurocs]])
    return buf.getvalue()
