import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from metabbo.metadata import MetadataRecord, RunData, SuiteMetadata
from metabbo.metrics import (
    UndefinedIndicator,
    anti_nfl,
    convergence_rows,
    efficiency_from_perf,
    hypervolume_2d,
    learning_efficiency,
    log_gap_score,
    nondominated_mask,
    perf_score,
    rank_table,
)
from metabbo.core.trainers import Snapshot
from metabbo.problems import build_suite
from oracles import anti_nfl_direct, hv_grid, log_gap_direct


def test_hv_single_rectangle():
    assert hypervolume_2d([(0.5, 0.5)], (1, 1)) == pytest.approx(0.25)


def test_hv_two_points():
    assert hypervolume_2d([(0.2, 0.8), (0.8, 0.2)], (1, 1)) == pytest.approx(0.28)
    assert hv_grid([(0.2, 0.8), (0.8, 0.2)], (1, 1)) == pytest.approx(0.28, abs=2e-3)


def test_hv_dominated_point_and_empty():
    base = hypervolume_2d([(0.2, 0.8), (0.8, 0.2)], (1, 1))
    assert hypervolume_2d([(0.2, 0.8), (0.8, 0.2), (0.9, 0.9)], (1, 1)) == base
    assert hypervolume_2d(np.empty((0, 2)), (1, 1)) == 0.0
    # points that do not dominate the reference contribute nothing
    assert hypervolume_2d([(1.5, 0.1)], (1, 1)) == 0.0


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 25), st.integers(0, 2**32 - 1))
def test_hv_matches_grid_oracle(n, seed):
    F = np.random.default_rng(seed).random((n, 2))
    assert hypervolume_2d(F, (1.0, 1.0)) == pytest.approx(hv_grid(F, (1.0, 1.0)), abs=2e-3)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 30), st.integers(0, 2**32 - 1))
def test_hv_permutation_invariant_and_front_only(n, seed):
    rng = np.random.default_rng(seed)
    F = rng.random((n, 2))
    hv = hypervolume_2d(F, (1.1, 1.1))
    assert hypervolume_2d(F[rng.permutation(n)], (1.1, 1.1)) == pytest.approx(hv, abs=1e-15)
    assert hypervolume_2d(F[nondominated_mask(F)], (1.1, 1.1)) == pytest.approx(hv, abs=1e-15)


def test_nondominated_mask_duplicates():
    F = np.array([[0.1, 0.5], [0.1, 0.5], [0.2, 0.6]])
    m = nondominated_mask(F)
    assert m[2] == False and m[:2].any()  # noqa: E712


def test_log_gap_examples():
    assert log_gap_score(5.0, 5.0, 0.0) == 0.0
    assert log_gap_score(5.0, 1e-9, 0.0) == 1.0
    assert log_gap_score(1e4, 1e-2, 0.0) == pytest.approx(0.5, abs=1e-7)


@settings(max_examples=100, deadline=None)
@given(st.floats(-8, 6), st.floats(-12, 6), st.floats(-100, 100))
def test_log_gap_matches_direct(l0, lf, f_opt):
    y0 = f_opt + 10.0**l0
    yf = f_opt + 10.0**min(lf, l0)
    s = log_gap_score(y0, yf, f_opt)
    assert 0.0 <= s <= 1.0
    assert s == pytest.approx(log_gap_direct(y0, yf, f_opt), abs=1e-9)


def test_anti_nfl_examples():
    assert anti_nfl(0.5, [0.5, 0.5]) == 1.0
    assert anti_nfl(0.5, [0.4, 0.6]) == pytest.approx(1.0, abs=1e-15)
    assert anti_nfl(0.5, [0.25, 0.25]) == pytest.approx(math.exp(-0.5), abs=1e-12)
    assert anti_nfl(0.5, [0.25, 0.25]) == pytest.approx(0.60653, abs=1e-5)
    with pytest.raises(UndefinedIndicator):
        anti_nfl(0.0, [0.3])
    with pytest.raises(ValueError):
        anti_nfl(0.5, [])
    assert anti_nfl(1e-9, [1.0]) == math.inf


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-2, 1), st.lists(st.floats(0, 1), min_size=1, max_size=6), st.floats(1e-2, 1e2))
def test_anti_nfl_direct_and_scale_covariant(train, tests, c):
    v = anti_nfl(train, tests)
    assert v == pytest.approx(anti_nfl_direct(train, tests), rel=1e-12, abs=1e-12)
    assert anti_nfl(c * train, [c * t for t in tests]) == pytest.approx(v, rel=1e-9)


def test_efficiency_examples():
    assert efficiency_from_perf(0.6, 3.0) == pytest.approx(0.2)
    with pytest.raises(ValueError):
        efficiency_from_perf(0.6, 0.0)


def _md(values_per_instance, problem_type="SOO"):
    recs = []
    for pid, runs in values_per_instance.items():
        data = {f"run_{k + 1}": RunData([np.zeros((2, 1))] * len(ys), [np.asarray(y, dtype=float) for y in ys], 0.1)
                for k, ys in enumerate(runs)}
        recs.append(MetadataRecord(pid, data))
    return SuiteMetadata(problem_type, recs)


@pytest.fixture
def two_suite():
    return build_suite({"suite": "soo-10d", "train": 1, "test": 1, "families": ["sphere"]})


def test_perf_score_plugin(two_suite):
    a, b = two_suite.train_ids[0], two_suite.test_ids[0]
    md = _md({a: [[[1e4, 2e4], [1e-2, 3.0]]], b: [[[7.0], [7.0]], [[7.0], [1e-12]]]})
    rep = perf_score(md, two_suite)
    assert rep.instance_scores[a] == pytest.approx(0.5, abs=1e-7)
    assert rep.instance_scores[b] == pytest.approx(0.5)
    assert rep.perf == pytest.approx(0.5, abs=1e-7)
    with pytest.raises(ValueError):
        perf_score(_md({"nope": [[[1.0]]]}), two_suite)


def test_perf_monotone_and_reorder_invariant(two_suite):
    a = two_suite.train_ids[0]
    base = perf_score(_md({a: [[[10.0], [1.0]], [[10.0], [2.0]]]}), two_suite).perf
    better = perf_score(_md({a: [[[10.0], [0.5]], [[10.0], [2.0]]]}), two_suite).perf
    swapped = perf_score(_md({a: [[[10.0], [2.0]], [[10.0], [1.0]]]}), two_suite).perf
    assert better >= base and swapped == pytest.approx(base)


def test_learning_efficiency(two_suite):
    a = two_suite.train_ids[0]
    md_lo = _md({a: [[[1e4], [1e-2]]]})   # Perf 0.5
    snaps = [Snapshot(0, np.zeros(1), 1.0, None, (1,)), Snapshot(1, np.zeros(1), 4.0, None, (1,))]
    eff = learning_efficiency(snaps, [md_lo, md_lo], two_suite)
    perf = perf_score(md_lo, two_suite).perf
    assert eff[0] == (0, pytest.approx(perf / 1.0, abs=1e-12))
    assert eff[1][1] == pytest.approx(perf / 4.0, abs=1e-12) and eff[1][1] < eff[0][1]
    with pytest.raises(ValueError):
        learning_efficiency([Snapshot(0, np.zeros(1), 0.0, None, (1,))], [md_lo], two_suite)


def _report(means, higher=False):
    from metabbo.metrics import PerfReport

    return PerfReport("SOO", {k: 0.0 for k in means}, {}, dict(means), {k: 0.0 for k in means}, higher)


def test_rank_examples():
    r = rank_table({"A": _report({"p": 1.0, "q": 1.0}), "B": _report({"p": 2.0, "q": 3.0})})
    assert r.average == {"A": 1.0, "B": 2.0} and r.order == ["A", "B"]
    r = rank_table({"A": _report({"p": 1.0}), "B": _report({"p": 1.0})})
    assert r.average == {"A": 1.5, "B": 1.5}
    r = rank_table({"A": _report({"p": 1, "q": 2, "s": 3}), "B": _report({"p": 2, "q": 3, "s": 1}),
                    "C": _report({"p": 3, "q": 1, "s": 2})})
    assert r.average == {"A": 2.0, "B": 2.0, "C": 2.0}
    with pytest.raises(ValueError):
        rank_table({"A": _report({"p": 1.0}), "B": _report({"q": 1.0})})


def test_rank_higher_is_better():
    r = rank_table({"A": _report({"p": 0.9}, True), "B": _report({"p": 0.5}, True)})
    assert r.average == {"A": 1.0, "B": 2.0}


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_rank_sum_invariant(A, n, seed):
    rng = np.random.default_rng(seed)
    vals = rng.integers(0, 3, size=(A, n)).astype(float)  # plenty of ties
    reps = {f"a{i}": _report({f"p{j}": vals[i, j] for j in range(n)}) for i in range(A)}
    r = rank_table(reps)
    assert sum(r.average.values()) == pytest.approx(A * (A + 1) / 2)


def test_convergence_rows_quartiles(two_suite):
    a = two_suite.train_ids[0]
    md = _md({a: [[[5.0], [3.0], [4.0]], [[6.0], [2.0], [1.0]], [[7.0], [7.0], [0.5]]]})
    rows = convergence_rows(md)
    assert [r[1] for r in rows] == [0, 1, 2]
    # best-so-far per run: (5,3,3), (6,2,1), (7,7,0.5)
    assert rows[0][2] == 6.0 and rows[2][2] == 1.0
    assert rows[2][3] == pytest.approx(np.percentile([3, 1, 0.5], 25))
