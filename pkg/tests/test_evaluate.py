import datetime as dt
import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from impactgraph.config import RunConfig
from impactgraph.data import LabelSeries
from impactgraph.evaluate import (
    RunFailed,
    ScoredDay,
    UndefinedMetricError,
    auroc,
    auroc_from_arrays,
    build_labels,
    run_ablation,
    run_baseline,
    run_experiment,
    sweep,
    sweep_table,
)
from impactgraph.llm import ScriptedBackend, TransportError
from helpers import TableBackend, mini_rule, write_mini
from oracles import pairwise_auroc

D = dt.date(2007, 7, 23)


# --- AUROC -----------------------------------------------------------------

def test_auroc_examples():
    assert auroc_from_arrays([0.9, 0.8, 0.1], [1, 1, 0]) == 1.0
    assert auroc_from_arrays([0.3] * 6, [1, 0, 1, 0, 0, 0]) == 0.5
    scores, labels = [0.9, 0.4, 0.6, 0.1], [1, 0, 1, 0]
    assert auroc_from_arrays(scores, labels) == pairwise_auroc(scores, labels)
    days = [ScoredDay(D + dt.timedelta(days=i), s, y) for i, (s, y) in enumerate(zip(scores, labels))]
    assert auroc(days) == 1.0


def test_auroc_single_class_undefined():
    with pytest.raises(UndefinedMetricError):
        auroc_from_arrays([0.1, 0.2], [1, 1])
    with pytest.raises(ValueError):
        ScoredDay(D, 1.5, 1)
    with pytest.raises(ValueError):
        ScoredDay(D, 0.5, 2)


_cases = st.lists(st.tuples(st.integers(0, 20).map(lambda i: i / 20), st.integers(0, 1)), min_size=2, max_size=60)


@given(_cases)
def test_auroc_matches_pairwise(case):
    s, y = zip(*case)
    if len(set(y)) < 2:
        return
    assert abs(auroc_from_arrays(s, y) - pairwise_auroc(s, y)) <= 1e-12


@given(_cases, st.sampled_from(["cube", "exp", "affine"]))
def test_auroc_monotone_invariance(case, kind):
    s, y = zip(*case)
    if len(set(y)) < 2:
        return
    f = {"cube": lambda x: x ** 3, "exp": lambda x: 2.0 ** (5 * x), "affine": lambda x: 0.2 + 0.5 * x}[kind]
    assert auroc_from_arrays([f(x) for x in s], y) == pytest.approx(auroc_from_arrays(s, y), abs=1e-12)


# grid scores keep 1 - s tie-free as well
@given(st.lists(st.integers(0, 1000), min_size=2, max_size=40, unique=True).map(lambda xs: [x / 1000 for x in xs]),
       st.randoms())
def test_auroc_complement(scores, rnd):
    labels = [rnd.randint(0, 1) for _ in scores]
    labels[0], labels[1] = 0, 1
    a = auroc_from_arrays(scores, labels)
    b = auroc_from_arrays([1 - s for s in scores], labels)
    assert a + b == pytest.approx(1.0, abs=1e-12)


# --- pipeline on the mini corpus -------------------------------------------

@pytest.fixture
def mini(tmp_path):
    paths = write_mini(tmp_path / "mini")
    cfg = RunConfig(corpus=paths["corpus"], prices=paths["prices"], portfolio=str(paths["portfolio"]),
                    backend="unused", repeats=2)
    return cfg


def test_pipeline_runs_and_scores(mini):
    result = run_experiment(mini, TableBackend(mini_rule))
    s = result.summary
    assert s.n_days == 3 and s.n_scored == 3 and s.n_positive == 2
    assert len(s.aurocs) == 2 and s.std == 0.0
    assert [r.label for r in result.records] == [1, 0, 1]
    first = result.records[0]
    assert first.top_entities and "mortgage industry" in first.top_entities
    assert {"daily", "temporal", "trr"} <= set(first.graphs)
    assert [p.verdict for p in first.predictions] == ["crash", "crash"]
    assert s.params["lambda"] == 1.0 and s.params["q"] == 6


def test_repeats_one_has_zero_std(mini):
    s = run_experiment(mini.replace(repeats=1), TableBackend(mini_rule)).summary
    assert len(s.aurocs) == 1 and s.std == 0.0


def test_no_temporal_drops_exactly_prior_day_chains(mini):
    full = run_experiment(mini, TableBackend(mini_rule))
    bare = run_ablation("no_temporal", mini, TableBackend(mini_rule))
    day2 = dt.date(2007, 7, 24)
    f_trr = next(r for r in full.records if r.day == day2).graphs["trr"]
    b_trr = next(r for r in bare.records if r.day == day2).graphs["trr"]
    assert b_trr.is_subgraph_of(f_trr)
    extra = set(f_trr.edges) - set(b_trr.edges)
    assert extra and all(e.day < day2 for e in extra)
    assert {e for e in f_trr.edges if e.day < day2} == extra
    assert bare.summary.variant == "no_temporal"


def test_no_temporal_on_first_day_equals_full(mini):
    full = run_experiment(mini, TableBackend(mini_rule))
    bare = run_ablation("no_temporal", mini, TableBackend(mini_rule))
    assert full.records[0].graphs["trr"].same_shape(bare.records[0].graphs["trr"])


def test_baselines_skip_graph_stages(mini):
    backend = TableBackend(lambda text: "Prediction: Yes" if "Lender" in text else "Prediction: No")
    result = run_baseline("cot", mini, backend)
    assert result.summary.variant == "cot"
    assert all(not r.graphs for r in result.records)
    assert all("Today's news headlines:" in c.messages[-1][1] for c in backend.calls)
    assert all(c.messages[-1][1].rstrip().endswith("Let's think step-by-step.") for c in backend.calls)
    io = TableBackend(backend.rule)
    run_baseline("io", mini, io)
    assert {c.digest for c in io.calls}.isdisjoint({c.digest for c in backend.calls})


def test_store_happens_even_if_reasoning_fails(mini):
    def rule(text):
        if "Impact tuples" in text:
            raise TransportError("reasoning endpoint down")
        return mini_rule(text)

    with pytest.raises(RunFailed):
        run_experiment(mini, TableBackend(rule))
    # with a generous abort budget the memory still fills up day by day
    result = run_experiment(mini.replace(max_abort_fraction=1.0), TableBackend(rule))
    assert all(r.status == "aborted" for r in result.records)
    assert result.memory.current_day == dt.date(2007, 7, 25)


def test_abort_threshold(mini):
    def flaky(text):
        if "Carmaker" in text:
            raise TransportError("timeout")
        return mini_rule(text)

    # 2 of 3 days contain the failing headline
    with pytest.raises(RunFailed, match="2 of 3"):
        run_experiment(mini, TableBackend(flaky))
    result = run_experiment(mini.replace(max_abort_fraction=0.7), TableBackend(flaky))
    assert result.summary.aborted_days == ["2007-07-24", "2007-07-25"]
    assert result.summary.n_scored == 1


def test_undefined_auroc_is_null(mini):
    only_day = LabelSeries(((dt.date(2007, 7, 24), 1), (dt.date(2007, 7, 25), 1), (dt.date(2007, 7, 26), 1)))
    s = run_experiment(mini, TableBackend(mini_rule), labels=lambda: only_day).summary
    assert s.aurocs == [None, None] and s.mean is None and s.std is None


def test_labels_read_only_after_all_days(mini):
    seen_days = []
    calls = []

    def provider():
        calls.append(list(seen_days))
        return build_labels(mini)

    result = run_experiment(mini.replace(prices=None), TableBackend(mini_rule), labels=provider,
                            on_day=lambda r: seen_days.append(r.day))
    assert calls == [[dt.date(2007, 7, 23), dt.date(2007, 7, 24), dt.date(2007, 7, 25)]]
    assert result.summary.n_scored == 3


def test_percentile_threshold_mode(mini):
    labels = build_labels(mini.replace(crash_percentile=50.0))
    assert sum(y for _, y in labels.rows) == 2


# --- demo corpus with scripted fixtures ------------------------------------

@pytest.fixture
def demo_cfg(demo_dir):
    return RunConfig(corpus=demo_dir / "corpus.jsonl", prices=demo_dir / "prices.csv",
                     backend=f"scripted:{demo_dir / 'fixtures.jsonl'}")


def test_demo_deterministic(demo_cfg):
    a = run_experiment(demo_cfg).summary.to_dict()
    b = run_experiment(demo_cfg).summary.to_dict()
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)
    assert a["n_days"] == 10 and a["n_positive"] == 3
    assert 0.0 <= a["mean_auroc"] <= 1.0


def test_demo_sweep_lambda(demo_cfg):
    backend = ScriptedBackend(demo_cfg.backend.split(":", 1)[1])
    rows = sweep("lambda", [0.1, 0.5, 1, 2, 10], demo_cfg, backend)
    assert [v for v, _ in rows] == [0.1, 0.5, 1.0, 2.0, 10.0]
    table = sweep_table("lambda", rows)
    assert table.splitlines()[0].startswith("lambda,mean_auroc,std_auroc,auroc_0")
    assert len(table.splitlines()) == 6
    assert sweep_table("lambda", sweep("lambda", [0.1, 0.5, 1, 2, 10], demo_cfg, backend)) == table


def test_demo_sweep_q(demo_cfg):
    rows = sweep("q", range(1, 13), demo_cfg)
    assert len(rows) == 12 and all(isinstance(v, int) for v, _ in rows)
    with pytest.raises(ValueError):
        sweep("k", [1], demo_cfg)
    with pytest.raises(ValueError):
        sweep("q", [], demo_cfg)


def test_no_decay_equals_full_on_single_day(demo_cfg, tmp_path):
    lines = demo_cfg.corpus.read_text().splitlines()
    for day in sorted({json.loads(x)["date"] for x in lines}):
        one = tmp_path / f"{day}.jsonl"
        one.write_text("".join(x + "\n" for x in lines if json.loads(x)["date"] == day))
        cfg = demo_cfg.replace(corpus=one)
        full = run_experiment(cfg)
        flat = run_ablation("no_decay", cfg)
        assert full.records[0].top_entities == flat.records[0].top_entities
        assert full.records[0].graphs["trr"].same_shape(flat.records[0].graphs["trr"])
        assert [p.to_dict() for p in full.records[0].predictions] == [p.to_dict() for p in flat.records[0].predictions]
