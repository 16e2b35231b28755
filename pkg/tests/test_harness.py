import csv
import io
import json
import os

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from chtbench import harness
from chtbench.cht import qpc_pi
from chtbench.harness import (RESULT_FIELDS, RunConfig, RunRecord, atomic_write, exact_agreement,
                              median_trace, results_csv, run_trials, sort_benchmark, summarize,
                              synthetic_pairs, verify_relaxation, verify_sign_equivalence,
                              xi_sensitivity_sweep)
from chtbench.mapping import QpcContext
from chtbench.optimizer import ChtConfig, DeParams, TracePoint
from chtbench.problem import evaluate, get_problem


def rec(best_f, feasible=True, success=False, min_fes=None, i=0):
    return RunRecord("G24", "qpc", i, i, best_f, 0.0 if feasible else 1.0, feasible, success, min_fes)


def test_summarize_all_successful():
    s = summarize([rec(-1.0, success=True, min_fes=10), rec(-2.0, success=True, min_fes=30)])
    assert s.fr == s.sr == 1.0
    assert (s.best, s.worst, s.median, s.mean) == (-2.0, -1.0, -1.5, -1.5)
    assert s.std == 0.5
    assert s.min_fes_mean == 20.0


def test_summarize_without_target():
    s = summarize([rec(1.0), rec(2.0)], has_target=False)
    assert s.sr is None and s.fr == 1.0


def test_summarize_inclusion_rule():
    mixed = summarize([rec(1.0), rec(100.0, feasible=False), rec(3.0)])
    assert mixed.fr == pytest.approx(2 / 3)
    assert (mixed.best, mixed.worst) == (1.0, 3.0)
    none = summarize([rec(5.0, feasible=False), rec(7.0, feasible=False)])
    assert none.fr == 0.0 and none.worst == 7.0 and none.min_fes_mean is None


@given(st.lists(st.tuples(st.floats(-1e6, 1e6), st.booleans(), st.integers(1, 10**5)), min_size=1, max_size=20),
       st.randoms())
def test_summarize_is_order_invariant(rows, rnd):
    records = [rec(f, feasible=ok, success=ok, min_fes=m if ok else None, i=i) for i, (f, ok, m) in enumerate(rows)]
    shuffled = list(records)
    rnd.shuffle(shuffled)
    a, b = summarize(records).aggregate(), summarize(shuffled).aggregate()
    assert a == b
    assert a["sr"] <= a["fr"]


def test_results_csv_schema():
    text = results_csv([rec(-1.5, success=True, min_fes=12), rec(0.1, feasible=False)])
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == RESULT_FIELDS
    assert rows[1] == ["G24", "qpc", "0", "0", "-1.5", "0.0", "true", "true", "12"]
    assert rows[2][-3:] == ["false", "false", ""]


def test_aggregate_json_keys():
    data = json.loads(harness.aggregate_json(summarize([rec(1.0)])))
    assert set(data) == {"fr", "sr", "best", "median", "worst", "mean", "std", "min_fes_mean"}


def test_atomic_write_replaces_and_leaves_no_temp(tmp_path):
    target = tmp_path / "sub" / "out.csv"
    atomic_write(target, "a\n")
    atomic_write(target, "b\n")
    assert target.read_text() == "b\n"
    assert os.listdir(target.parent) == ["out.csv"]


def test_atomic_write_failure_keeps_old_file(tmp_path, monkeypatch):
    target = tmp_path / "out.csv"
    atomic_write(target, "old\n")

    def boom(src, dst):
        raise OSError("disk full")

    monkeypatch.setattr(os, "replace", boom)
    with pytest.raises(OSError):
        atomic_write(target, "new\n")
    assert target.read_text() == "old\n"
    assert os.listdir(tmp_path) == ["out.csv"]


def test_run_trials_seeds_and_parallel_match():
    cfg = RunConfig("G24", ChtConfig(), DeParams(pop_size=20, max_fes=1000), runs=3, seed=7)
    seq = run_trials(cfg, jobs=1)
    par = run_trials(cfg, jobs=3)
    assert [r.seed for r in seq.records] == [7, 8, 9]
    assert results_csv(seq.records) == results_csv(par.records)


def test_run_trials_rejects_zero_runs():
    with pytest.raises(ValueError):
        run_trials(RunConfig("G24"), n_runs=0)


def test_sign_equivalence_trivial_and_small():
    g24 = get_problem("G24")
    empty = verify_sign_equivalence([g24], 0)
    assert empty.passed and empty.checked == 0
    rep = verify_sign_equivalence([g24], 2000, seed=1)
    assert rep.passed and rep.checked == 2000 * 12


def test_identical_pair_is_equivalent_with_zero_gap():
    cop = get_problem("G06")
    e = evaluate(cop, [50.0, 50.0])
    ctx = QpcContext(10.0, 5.0, 0.5)
    assert qpc_pi(e, ctx) - qpc_pi(e, ctx) == 0.0
    assert exact_agreement(e.f, e.viol, e.f, e.viol, 10.0, 5.0, 0.5, (0.5,)) == (0, 0)


def test_sign_oracle_catches_a_broken_pi(monkeypatch):
    def broken(f, viol, ctx):
        # omits xi from the violation weight, which tilts the equivalence line when xi < 1
        f, viol = np.asarray(f), np.asarray(viol)
        th = np.where(viol > 0, viol, -ctx.g_max)
        return -(f + np.where(viol > 0, ctx.f_range, 0.0) + ctx.f_range / ctx.g_max * th)

    monkeypatch.setattr(harness, "pi_values", broken)
    rep = verify_sign_equivalence([get_problem("G24")], 2000)
    assert rep.mismatches > 0
    worst = rep.worst
    assert {"x1", "x2", "y", "z", "chi", "lambda", "phi", "pi1", "pi2", "xi", "etas"} <= set(worst)


def test_exact_adjudication_of_near_line_pair():
    # pair sitting on the line to within rounding: both exact signs must agree
    crit, sign = exact_agreement(0.3, 0.0, 0.0, 0.3, 1.0, 1.0, 1.0, (0.5,))
    assert crit == sign


def test_synthetic_pairs_respect_bands():
    rng = np.random.default_rng(0)
    f1, v1, f2, v2 = synthetic_pairs(20000, 1.0, 2.0, rng)
    assert ((v1 >= 0) & (v2 >= 0)).all()
    assert not ((v1 == 0) & (v2 == 0)).any()
    assert (v1 <= 2.0).all() and (v2 <= 2.0).all()


def test_relaxation_unit_scales():
    rep = verify_relaxation(100_000, 2.0, 1.0)
    assert rep.mu == pytest.approx(1 / 16)
    assert rep.passed


def test_relaxation_other_scales():
    rep = verify_relaxation(50_000, 3.0, 0.5, f_range=4.0, g_max=0.25, seed=3)
    assert rep.mu == pytest.approx(0.5 / 8 * (1 - 1 / 3))
    assert rep.passed


def test_relaxation_requires_inflation():
    with pytest.raises(ValueError):
        verify_relaxation(10, 1.0, 1.0)


def test_sort_benchmark_counts():
    rows = sort_benchmark([2, 10, 50], repeats=1)
    for r in rows:
        assert r.eval_calls == r.size
        assert r.compare_calls >= r.size - 1
        assert r.same_order
    with pytest.raises(ValueError):
        sort_benchmark([1])


def test_sortbench_csv_header():
    text = harness.sortbench_csv(sort_benchmark([10], repeats=1))
    assert text.splitlines()[0] == "size,eval_sort_time,pairwise_sort_time,eval_calls,compare_calls,same_order"


def test_xi_sweep_shapes():
    base = RunConfig("G24", de=DeParams(pop_size=10, max_fes=200))
    out = xi_sensitivity_sweep("G24", [1.0, 1e-3], base, runs=2)
    assert list(out) == [1.0, 1e-3]
    assert all(len(traces) == 2 for traces in out.values())
    single = xi_sensitivity_sweep("G24", [0.1], base)
    assert len(single) == 1
    with pytest.raises(ValueError):
        xi_sensitivity_sweep("G24", [0.0], base)


def test_median_trace():
    a = [TracePoint(10, None, 3.0), TracePoint(20, -1.0, 0.0)]
    b = [TracePoint(10, -2.0, 1.0), TracePoint(20, -3.0, 0.0)]
    m = median_trace([a, b])
    assert m == [TracePoint(10, -2.0, 2.0), TracePoint(20, -2.0, 0.0)]
