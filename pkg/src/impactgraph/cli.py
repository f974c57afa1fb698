"""Command-line entry points."""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import io
import json
import logging
import shutil
import sys
from importlib import resources
from pathlib import Path
from typing import Sequence

from .config import ABLATIONS, BASELINES, MODES, ConfigError, RunConfig, load_config
from .core import ImpactGraph
from .data import DataError
from .evaluate import ExperimentResult, RunFailed, run_experiment, sweep, sweep_table
from .export import indicator_svg, to_dot, to_json, write_text
from .llm import BackendError
from .memory import snapshot

log = logging.getLogger("impactgraph")

# flag name -> RunConfig field
_FLAG_FIELDS = {
    "corpus": "corpus",
    "prices": "prices",
    "ted": "ted",
    "portfolio": "portfolio",
    "backend": "backend",
    "model": "model_name",
    "lambda": "lambda_",
    "q": "q",
    "k": "k",
    "max_iter": "max_iterations",
    "damping": "damping",
    "repeats": "repeats",
    "mode": "mode",
    "ablate": "ablation",
    "baseline": "baseline",
    "out": "out",
    "run_name": "run_name",
    "workers": "workers",
    "temperature": "temperature",
    "crash_percentile": "crash_percentile",
}


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="YAML config file; flags override its values")
    p.add_argument("--corpus", type=Path, help="line-delimited JSON news corpus")
    p.add_argument("--prices", type=Path, help="CSV date,ticker,close")
    p.add_argument("--ted", type=Path, help="CSV date,spread")
    p.add_argument("--portfolio", help="bundled portfolio name or YAML path")
    p.add_argument("--backend", help="scripted:<fixtures.jsonl> or an http(s) chat-completion url")
    p.add_argument("--model", help="model name sent to the http backend")
    p.add_argument("--lambda", type=float, dest="lambda", help="memory decay constant (days)")
    p.add_argument("--q", type=int, help="number of top-ranked entities kept")
    p.add_argument("--k", type=int, help="entities requested per expansion")
    p.add_argument("--max-iter", type=int, dest="max_iter", help="brainstorm iterations")
    p.add_argument("--damping", type=float)
    p.add_argument("--repeats", type=int, help="reasoning prompt repetitions")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--ablate", choices=ABLATIONS)
    p.add_argument("--baseline", choices=BASELINES)
    p.add_argument("--temperature", type=float)
    p.add_argument("--crash-percentile", type=float, dest="crash_percentile",
                   help="derive the crash threshold from this percentile of window returns")
    p.add_argument("--workers", type=int)
    p.add_argument("--out", type=Path, help="base output directory (default runs/)")
    p.add_argument("--run-name", dest="run_name", help="run directory name (default: UTC timestamp)")


def config_from_args(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {}
    for flag, field_name in _FLAG_FIELDS.items():
        value = getattr(args, flag, None)
        if value is not None:
            overrides[field_name] = value
    cfg = cfg.replace(**overrides)
    return cfg


def _run_dir(cfg: RunConfig) -> Path:
    name = cfg.run_name or dt.datetime.now(dt.timezone.utc).strftime("%Y%m%dT%H%M%SZ")
    path = Path(cfg.out) / name
    if cfg.run_name is None:
        i = 1
        while path.exists():
            path = Path(cfg.out) / f"{name}-{i}"
            i += 1
    path.mkdir(parents=True, exist_ok=True)
    return path


def _jsonl(rows) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in rows)


def write_artifacts(result: ExperimentResult, run_dir: Path) -> list[Path]:
    s = result.summary
    written = [write_text(run_dir / "summary.json", json.dumps(s.to_dict(), indent=2, sort_keys=True) + "\n")]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["run", "auroc"])
    for i, a in enumerate(s.aurocs):
        w.writerow([i, "" if a is None else repr(a)])
    written.append(write_text(run_dir / "results.csv", buf.getvalue()))
    written.append(write_text(run_dir / "transcripts.jsonl", _jsonl(result.transcript.records)))
    written.append(write_text(run_dir / "records.jsonl", _jsonl(r.to_dict() for r in result.records)))
    written.append(snapshot(result.memory, run_dir / "memory.json"))
    for r in result.records:
        if r.graphs:
            doc = {name: g.to_dict() for name, g in r.graphs.items()}
            written.append(write_text(run_dir / "graphs" / f"{r.day.isoformat()}.json",
                                      json.dumps(doc, indent=1, sort_keys=True) + "\n"))
    return written


def indicator_rows(result: ExperimentResult) -> list[tuple[str, float, int | None]]:
    rows = []
    for r in result.records:
        if r.status != "ok" or not r.predictions:
            continue
        probs = [p.score for p in r.predictions]
        rows.append((r.day.isoformat(), sum(probs) / len(probs), r.label))
    return rows


def cmd_run(args: argparse.Namespace) -> int:
    cfg = config_from_args(args).validate()
    result = run_experiment(cfg)
    run_dir = _run_dir(cfg)
    write_artifacts(result, run_dir)
    if cfg.mode == "macro":
        _write_indicator(result, run_dir)
    s = result.summary
    print(f"{s.variant}: mean AUROC {s.mean} (std {s.std}) over {s.n_scored} days -> {run_dir}")
    return 0


def _write_indicator(result: ExperimentResult, run_dir: Path) -> None:
    rows = indicator_rows(result)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["day", "probability", "label"])
    for day, p, label in rows:
        w.writerow([day, repr(p), "" if label is None else label])
    write_text(run_dir / "indicator.csv", buf.getvalue())
    write_text(run_dir / "indicator.svg", indicator_svg(rows))


def cmd_macro(args: argparse.Namespace) -> int:
    cfg = config_from_args(args).replace(mode="macro").validate()
    result = run_experiment(cfg)
    run_dir = _run_dir(cfg)
    write_artifacts(result, run_dir)
    _write_indicator(result, run_dir)
    print(f"crisis indicator for {len(indicator_rows(result))} days -> {run_dir / 'indicator.csv'}")
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = config_from_args(args).validate()
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise ConfigError("values", f"not a comma-separated list of numbers: {args.values!r}") from None
    if not values:
        raise ConfigError("values", "at least one value is required")
    rows = sweep(args.param, values, cfg)
    run_dir = _run_dir(cfg)
    write_text(run_dir / "sweep.csv", sweep_table(args.param, rows))
    write_text(run_dir / "sweep.json", json.dumps(
        {"param": args.param, "runs": [{"value": v, **s.to_dict()} for v, s in rows]}, indent=2, sort_keys=True
    ) + "\n")
    print(f"{len(rows)} runs -> {run_dir / 'sweep.csv'}")
    return 0


def cmd_export_graph(args: argparse.Namespace) -> int:
    archive = Path(args.run) / "graphs" / f"{args.day}.json"
    if not archive.is_file():
        raise FileNotFoundError(f"no graph archive for {args.day} in {args.run}")
    doc = json.loads(archive.read_text("utf-8"))
    if args.graph not in doc:
        raise ConfigError("graph", f"archive has {sorted(doc)}, not {args.graph!r}")
    graph = ImpactGraph.from_dict(doc[args.graph])
    text = to_dot(graph, args.top_n) if args.format == "dot" else to_json(graph)
    out = Path(args.output) if args.output else Path(args.run) / "graphs" / f"{args.day}.{args.graph}.{args.format}"
    write_text(out, text)
    print(out)
    return 0


DEMO_FILES = (
    "corpus.jsonl", "prices.csv", "ted.csv", "fixtures.jsonl", "macro_fixtures.jsonl", "crash.yaml", "macro.yaml",
)


def cmd_demo_data(args: argparse.Namespace) -> int:
    dest = Path(args.dest)
    dest.mkdir(parents=True, exist_ok=True)
    src = resources.files("impactgraph.fixtures").joinpath("demo")
    for name in DEMO_FILES:
        with resources.as_file(src.joinpath(name)) as p:
            shutil.copyfile(p, dest / name)
    print(f"demo corpus, prices, TED series and scripted fixtures -> {dest}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="impactgraph", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the pipeline, an ablation or a baseline")
    _add_run_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("macro", help="crisis probability indicator over regional economies")
    _add_run_flags(p)
    p.set_defaults(func=cmd_macro)

    p = sub.add_parser("sweep", help="one run per value of lambda or q")
    _add_run_flags(p)
    p.add_argument("--param", choices=("lambda", "q"), required=True)
    p.add_argument("--values", required=True, help="comma-separated values, e.g. 0.1,0.5,1,2,10")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("export-graph", help="export one day's archived graph as DOT or JSON")
    p.add_argument("--run", required=True, help="run directory")
    p.add_argument("--day", required=True, help="ISO day, e.g. 2007-07-30")
    p.add_argument("--format", choices=("dot", "json"), default="dot")
    p.add_argument("--graph", choices=("trr", "temporal", "daily"), default="trr")
    p.add_argument("--top-n", type=int, default=5, dest="top_n")
    p.add_argument("--output")
    p.set_defaults(func=cmd_export_graph)

    p = sub.add_parser("demo-data", help="copy the bundled synthetic corpus and fixtures")
    p.add_argument("dest")
    p.set_defaults(func=cmd_demo_data)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, DataError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    except (RunFailed, BackendError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
