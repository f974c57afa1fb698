import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from impactgraph.cli import DEMO_FILES, main
from impactgraph.config import ConfigError, RunConfig, interpolate_env, load_config
from impactgraph.core import ImpactGraph
from impactgraph.data import crisis_labels, load_ted
from impactgraph.synthetic import write_demo


def _run(*argv) -> int:
    return main([str(a) for a in argv])


# --- configuration ---------------------------------------------------------

def test_defaults():
    cfg = RunConfig()
    assert (cfg.lambda_, cfg.q, cfg.repeats, cfg.temperature) == (1.0, 6, 5, 0.0)
    assert (cfg.k, cfg.max_iterations, cfg.damping) == (3, 4, 0.85)
    assert cfg.portfolio_name == "country_neutral"
    assert cfg.replace(mode="macro").portfolio_name == "economies"


def test_env_interpolation(monkeypatch):
    monkeypatch.setenv("IG_TOKEN", "abc")
    monkeypatch.delenv("IG_MISSING", raising=False)
    assert interpolate_env({"a": ["${IG_TOKEN}", "x${IG_MISSING:-dflt}"]}) == {"a": ["abc", "xdflt"]}
    with pytest.raises(ConfigError, match="IG_MISSING"):
        interpolate_env("${IG_MISSING}")


def test_load_config_resolves_relative_paths(tmp_path, monkeypatch):
    monkeypatch.setenv("IG_LAMBDA", "2.5")
    (tmp_path / "c.yaml").write_text(
        "corpus: data/corpus.jsonl\nbackend: scripted:fx.jsonl\nlambda: ${IG_LAMBDA}\nmax-iter: 2\nablate: no_decay\n"
    )
    cfg = load_config(tmp_path / "c.yaml")
    assert cfg.corpus == tmp_path / "data" / "corpus.jsonl"
    assert cfg.backend == f"scripted:{tmp_path / 'fx.jsonl'}"
    assert cfg.lambda_ == 2.5
    assert cfg.max_iterations == 2 and cfg.ablation == "no_decay"
    (tmp_path / "bad.yaml").write_text("colour: blue\n")
    with pytest.raises(ConfigError, match="colour"):
        load_config(tmp_path / "bad.yaml")
    (tmp_path / "bad.yaml").write_text("q: many\n")
    with pytest.raises(ConfigError, match="q: expected int"):
        load_config(tmp_path / "bad.yaml")


def test_validate_names_the_field(demo_dir):
    base = RunConfig(corpus=demo_dir / "corpus.jsonl", prices=demo_dir / "prices.csv", backend="scripted:x")
    base.validate()
    cases = {
        "prices": base.replace(prices=demo_dir / "absent.csv"),
        "corpus": base.replace(corpus=None),
        "backend": base.replace(backend=""),
        "q": base.replace(q=0),
        "lambda": base.replace(lambda_=0.0),
        "ted": base.replace(mode="macro"),
        "baseline": base.replace(baseline="io", ablation="no_decay"),
    }
    for field_name, cfg in cases.items():
        with pytest.raises(ConfigError) as err:
            cfg.validate()
        assert err.value.field == field_name


# --- commands --------------------------------------------------------------

def test_run_writes_artifacts(demo_dir, tmp_path, capsys):
    out = tmp_path / "runs"
    code = _run("run", "--config", demo_dir / "crash.yaml", "--out", out, "--run-name", "r1")
    assert code == 0
    run = out / "r1"
    for name in ("summary.json", "results.csv", "transcripts.jsonl", "records.jsonl", "memory.json"):
        assert (run / name).is_file()
    assert len(list((run / "graphs").glob("*.json"))) == 10
    summary = json.loads((run / "summary.json").read_text())
    assert summary["variant"] == "full" and len(summary["aurocs"]) == 5
    rows = list(csv.reader((run / "results.csv").open()))
    assert rows[0] == ["run", "auroc"] and len(rows) == 6
    assert "mean AUROC" in capsys.readouterr().out


def test_run_is_idempotent(demo_dir, tmp_path):
    for name in ("a", "b"):
        assert _run("run", "--config", demo_dir / "crash.yaml", "--out", tmp_path, "--run-name", name) == 0
    for rel in ("summary.json", "results.csv", "transcripts.jsonl", "records.jsonl", "memory.json"):
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()


def test_transcripts_replay_as_fixtures(demo_dir, tmp_path):
    assert _run("run", "--config", demo_dir / "crash.yaml", "--out", tmp_path, "--run-name", "live") == 0
    replay = tmp_path / "live" / "transcripts.jsonl"
    assert _run("run", "--config", demo_dir / "crash.yaml", "--backend", f"scripted:{replay}",
                "--out", tmp_path, "--run-name", "again") == 0
    for rel in ("summary.json", "records.jsonl"):
        assert (tmp_path / "live" / rel).read_bytes() == (tmp_path / "again" / rel).read_bytes()


@pytest.mark.parametrize("flags, variant", [(["--ablate", "no_decay"], "no_decay"),
                                            (["--ablate", "no_temporal"], "no_temporal"),
                                            (["--baseline", "io"], "io"), (["--baseline", "cot"], "cot")])
def test_variants_labelled(demo_dir, tmp_path, flags, variant):
    assert _run("run", "--config", demo_dir / "crash.yaml", "--out", tmp_path, "--run-name", "v", *flags) == 0
    assert json.loads((tmp_path / "v" / "summary.json").read_text())["variant"] == variant


def test_flags_without_config(demo_dir, tmp_path):
    code = _run("run", "--corpus", demo_dir / "corpus.jsonl", "--prices", demo_dir / "prices.csv",
                "--portfolio", "country_neutral", "--backend", f"scripted:{demo_dir / 'fixtures.jsonl'}",
                "--mode", "crash", "--lambda", 2, "--out", tmp_path, "--run-name", "f")
    assert code == 0
    assert json.loads((tmp_path / "f" / "summary.json").read_text())["params"]["lambda"] == 2.0


def test_missing_prices_is_usage_error(demo_dir, tmp_path, capsys):
    code = _run("run", "--config", demo_dir / "crash.yaml", "--prices", tmp_path / "nope.csv", "--out", tmp_path)
    assert code == 2
    assert "prices" in capsys.readouterr().err


def test_fixture_miss_fails_run(demo_dir, tmp_path, capsys):
    code = _run("run", "--config", demo_dir / "crash.yaml", "--k", 2, "--out", tmp_path, "--run-name", "x")
    assert code == 1
    assert "no scripted response" in capsys.readouterr().err
    assert not (tmp_path / "x" / "summary.json").exists()


def test_macro_indicator(demo_dir, tmp_path):
    assert _run("macro", "--config", demo_dir / "macro.yaml", "--out", tmp_path, "--run-name", "m") == 0
    rows = list(csv.DictReader((tmp_path / "m" / "indicator.csv").open()))
    assert len(rows) == 10
    assert all(0.0 <= float(r["probability"]) <= 1.0 for r in rows)
    labels = crisis_labels(load_ted(demo_dir / "ted.csv"))
    expected = {}
    days = labels.days
    for r in rows:
        nxt = next(d for d in days if d.isoformat() > r["day"])
        expected[r["day"]] = str(labels.as_dict()[nxt])
    assert {r["day"]: r["label"] for r in rows} == expected
    svg = (tmp_path / "m" / "indicator.svg").read_text()
    assert svg.startswith("<svg") and "<polyline" in svg


def test_sweep_command(demo_dir, tmp_path):
    assert _run("sweep", "--config", demo_dir / "crash.yaml", "--param", "lambda", "--values", "0.1,0.5,1,2,10",
                "--out", tmp_path, "--run-name", "s") == 0
    lines = (tmp_path / "s" / "sweep.csv").read_text().splitlines()
    assert len(lines) == 6
    assert _run("sweep", "--config", demo_dir / "crash.yaml", "--param", "q", "--values", "x",
                "--out", tmp_path) == 2


def test_export_graph(demo_dir, tmp_path):
    assert _run("run", "--config", demo_dir / "crash.yaml", "--out", tmp_path, "--run-name", "r") == 0
    run = tmp_path / "r"
    assert _run("export-graph", "--run", run, "--day", "2007-08-01", "--format", "dot") == 0
    dot = (run / "graphs" / "2007-08-01.trr.dot").read_text()
    assert dot.startswith("digraph")
    out = tmp_path / "g.json"
    assert _run("export-graph", "--run", run, "--day", "2007-08-01", "--format", "json", "--graph", "temporal",
                "--output", out) == 0
    archived = json.loads((run / "graphs" / "2007-08-01.json").read_text())["temporal"]
    assert ImpactGraph.from_dict(json.loads(out.read_text())).same_shape(ImpactGraph.from_dict(archived))
    assert _run("export-graph", "--run", run, "--day", "1999-01-01") == 2


def test_demo_data_command(tmp_path):
    assert _run("demo-data", tmp_path / "d") == 0
    assert sorted(p.name for p in (tmp_path / "d").iterdir()) == sorted(DEMO_FILES)


def test_bundled_demo_matches_generator(tmp_path, demo_dir):
    write_demo(tmp_path / "fresh")
    for p in sorted((tmp_path / "fresh").iterdir()):
        assert p.read_bytes() == (demo_dir / p.name).read_bytes(), p.name


def test_cli_entry_point_help(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
    assert "export-graph" in capsys.readouterr().out


def test_module_runs(tmp_path):
    res = subprocess.run([sys.executable, "-m", "impactgraph", "demo-data", str(tmp_path / "m")],
                         capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert Path(tmp_path / "m" / "corpus.jsonl").is_file()
