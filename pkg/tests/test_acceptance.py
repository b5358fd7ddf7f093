"""Acceptance gate: every criterion at its stated tolerance.

Each test records a one-line PASS/FAIL summary that is printed in the
"acceptance criteria" section at the end of the pytest run.
"""

import json
import math
import os
import statistics
import time

import numpy as np
import pytest
from scipy.stats import binomtest

from metabbo.core import NEConfig, RLConfig, episode, train_ne, train_rl
from metabbo.core.agents import BaselineAgent, PolicyAgent
from metabbo.core.env import fixed_design_run
from metabbo.core.policy import ARCHITECTURE, MetaPolicy, design_bias, log_prob, log_prob_grad, n_params
from metabbo.core.trainers import Snapshot
from metabbo.metadata import SuiteMetadata, read_metadata, validate_schema, write_metadata
from metabbo.metrics import anti_nfl, hypervolume_2d, learning_efficiency, perf_score
from metabbo.optimizers import AlgorithmDesign, run_baseline
from metabbo.parallel import TestPlan, WorkerPool, rollout_batch, run_test_plan
from metabbo.problems import FAMILIES, build_suite, make_soo_instance

from oracles import anti_nfl_direct, hv_grid

pytestmark = pytest.mark.acceptance

FIXED = AlgorithmDesign(0.5, 0.9, 0)


@pytest.fixture(scope="module")
def mode_grid():
    """Test metadata for Modes 1-4 x {1, 8} workers on a 4-instance x 5-run plan."""
    suite = build_suite({"suite": "soo-10d", "seed": 3})
    insts = suite.test_set()[:4]
    agent = PolicyAgent(MetaPolicy.init(0, out_bias=design_bias(FIXED)))
    out = {}
    for mode in (1, 2, 3, 4):
        for workers in (1, 8):
            out[(mode, workers)] = run_test_plan(agent, TestPlan(mode, insts, runs=5, workers=workers)).metadata()
    return out


def test_c1_metadata_schema(mode_grid, tmp_path, criterion):
    ok = True
    for (mode, workers), md in mode_grid.items():
        path = write_metadata(tmp_path / f"m{mode}w{workers}.json", md)
        text = path.read_text()
        obj = json.loads(text)
        validate_schema(obj)
        ok &= list(obj) == ["problem_type", "all_data"]
        ok &= all(list(rec) == ["problem_id", "data"] for rec in obj["all_data"])
        ok &= all(list(run) == ["X", "Y", "T"] for rec in obj["all_data"] for run in rec["data"].values())
        ok &= read_metadata(path).dumps() == text == SuiteMetadata.loads(text).dumps()
    criterion(1, ok, f"{len(mode_grid)} files validated and round-tripped byte-identically")
    assert ok


def test_c2_mode_invariance(mode_grid, criterion):
    texts = {k: md.without_times().dumps() for k, md in mode_grid.items()}
    distinct = len(set(texts.values()))
    ok = distinct == 1 and all(md.n_runs_total == 20 for md in mode_grid.values())
    criterion(2, ok, f"modes 1-4 x workers 1/8: {distinct} distinct metadata payload(s) across {len(texts)} runs")
    assert ok


def _median_rate(fn, trials=3):
    rates = []
    for _ in range(trials):
        t = time.perf_counter()
        n = fn()
        rates.append(n / (time.perf_counter() - t))
    return statistics.median(rates)


def test_c3_parallel_speedup(criterion):
    suite = build_suite({"suite": "soo-10d"})
    agent = BaselineAgent("DE")

    def plan_rate(workers):
        return _median_rate(lambda: run_test_plan(agent, TestPlan(4, suite.test_set(), runs=3,
                                                                  workers=workers)).n_records)

    test_speedup = plan_rate(8) / plan_rate(1)
    pol = MetaPolicy.init(0)
    tasks = [(p, s, s + 1) for s, p in enumerate((suite.train_set() * 2)[:16])]

    def train_rate(pool):
        return _median_rate(lambda: len(rollout_batch(pol, tasks, "sample", pool)))

    serial = train_rate(None)
    with WorkerPool(8) as pool:
        vec = train_rate(pool)
    train_speedup = vec / serial
    import os

    ok = test_speedup >= 4.0 and train_speedup >= 3.0
    criterion(3, ok, f"Mode-4 8 vs 1 workers {test_speedup:.2f}x (need 4x); B=16 training on 8 workers "
                     f"{train_speedup:.2f}x (need 3x); {os.cpu_count()} CPU(s) visible")
    assert ok


def test_c4_metric_oracles(criterion):
    rng = np.random.default_rng(2024)
    nfl_err = abs(anti_nfl(0.8, [0.4]) - anti_nfl_direct(0.8, [0.4]))
    nfl_ok = abs(anti_nfl(0.8, [0.4]) - math.exp(-0.5)) < 1e-12 and abs(anti_nfl(0.8, [0.4]) - 0.60653) < 1e-5
    for _ in range(99):
        train = rng.uniform(0.01, 1.0)
        tests = list(rng.uniform(0.0, 1.0, rng.integers(1, 6)))
        nfl_err = max(nfl_err, abs(anti_nfl(train, tests) - anti_nfl_direct(train, tests)))
    nfl_ok &= nfl_err < 1e-12

    suite = build_suite({"suite": "soo-10d", "max_fes": 500, "test": 2, "train": 1, "seed": 9})
    md = run_test_plan(BaselineAgent("DE"), TestPlan(4, suite.test_set(), runs=2)).metadata()
    perf = perf_score(md, suite).perf
    snaps = [Snapshot(e, np.zeros(1), h, None, (1,)) for e, h in ((0, 0.01), (1, 0.5), (2, 3.0))]
    eff = learning_efficiency(snaps, [md] * 3, suite)
    eff_err = max(abs(v - perf / s.hours) for (_, v), s in zip(eff, snaps))

    hv_err = 0.0
    for _ in range(50):
        F = rng.random((int(rng.integers(1, 12)), 2)) * 1.1
        hv_err = max(hv_err, abs(hypervolume_2d(F, (1.1, 1.1)) - hv_grid(F, (1.1, 1.1))))
    ok = nfl_ok and eff_err < 1e-12 and hv_err < 2e-3
    criterion(4, ok, f"anti_nfl max err {nfl_err:.1e}; efficiency max err {eff_err:.1e}; "
                     f"hypervolume max |diff| vs grid {hv_err:.1e}")
    assert ok


def test_c5_optimizer_sanity(criterion):
    p = make_soo_instance("sphere", 10, 1)

    def median_gap(opt):
        return float(np.median([run_baseline(opt, p.fresh(s), s).final_best - p.f_opt for s in range(11)]))

    gaps = {opt: median_gap(opt) for opt in ("RS", "DE", "PSO", "SHADE")}
    ok = gaps["SHADE"] <= 1e-2 * gaps["RS"] and gaps["DE"] < gaps["RS"] and gaps["PSO"] < gaps["RS"]
    criterion(5, ok, "median final gaps " + ", ".join(f"{k} {v:.2e}" for k, v in gaps.items()))
    assert ok


def test_c6_gradient_check(criterion):
    rng = np.random.default_rng(6)
    pol = MetaPolicy(rng.normal(0, 0.3, n_params()), ARCHITECTURE)
    S = rng.normal(size=(8, 9))
    raw = rng.normal(size=(8, 2))
    K = rng.integers(0, 3, 8)
    w = rng.normal(size=8)
    g = log_prob_grad(pol, S, raw, K, w)
    h, worst = 1e-5, 0.0
    for j in rng.choice(pol.theta.size, size=64, replace=False):
        tp, tm = pol.theta.copy(), pol.theta.copy()
        tp[j] += h
        tm[j] -= h
        fd = (w @ log_prob(pol.with_theta(tp), S, raw, K) - w @ log_prob(pol.with_theta(tm), S, raw, K)) / (2 * h)
        worst = max(worst, abs(fd - g[j]) / max(abs(fd), abs(g[j]), 1e-6))
    ok = worst < 1e-4
    criterion(6, ok, f"max relative error over 64 probes {worst:.1e}")
    assert ok


# meta-learning smoke test setup
SMOKE_SUITE = {"suite": "soo-10d", "families": ["sphere", "ellipsoid", "rastrigin"], "seed": 7}
SMOKE_SEEDS = (101, 102, 103, 104, 105)
SMOKE_RL = RLConfig(epochs=20, episodes_per_instance=8, lr=0.02, batch_size=16)
SMOKE_NE = NEConfig(generations=20, popsize=8, lr=0.02, sigma=0.05)


def _per_instance(run, problems):
    return [float(np.mean([run(p, s) for s in SMOKE_SEEDS])) for p in problems]


def _sign_test(policy, test_set, fixed):
    mine = _per_instance(lambda p, s: episode(policy, p, s, "greedy")[0].R, test_set)
    wins = sum(a > b for a, b in zip(mine, fixed))
    losses = sum(a < b for a, b in zip(mine, fixed))
    pval = binomtest(wins, wins + losses, 0.5, alternative="greater").pvalue if wins + losses else 1.0
    return wins, losses, pval


def test_c7_meta_learning_smoke(criterion):
    suite = build_suite(SMOKE_SUITE)
    train, test = suite.train_set(), suite.test_set()
    assert len(train) == 8 and len(test) == 16
    fixed = _per_instance(lambda p, s: fixed_design_run(FIXED, p, s)[0], test)
    results = {}
    for name, trainer, cfg in (("RL", train_rl, SMOKE_RL), ("NE", train_ne, SMOKE_NE)):
        pol = MetaPolicy.init(0, out_bias=design_bias(FIXED))
        trainer(pol, train, cfg)
        results[name] = _sign_test(pol, test, fixed)
    ok = all(p <= 0.05 for _, _, p in results.values())
    criterion(7, ok, "; ".join(f"{k} wins {w} losses {l} p={p:.3g}" for k, (w, l, p) in results.items()))
    assert ok


def test_c8_protocol_counts(criterion):
    suite = build_suite({"suite": "soo-10d"})
    res = run_test_plan(BaselineAgent("DE"), TestPlan(4, suite.test_set(), runs=51, log_every=50))
    recs = res.ordered()
    gens = {r.generations - 1 for r in recs}
    ok = (len(suite.test_set()) == 16 and res.n_records == 816 and res.metadata().n_runs_total == 816
          and gens == {199} and all(r.fes_used == 20000 and len(r.best_curve) == 200 for r in recs))
    criterion(8, ok, f"{res.n_records} records, post-init generations {sorted(gens)}")
    assert ok


def test_c9_telescoping(criterion):
    rng = np.random.default_rng(9)
    worst = 0.0
    for k in range(200):
        fam = FAMILIES[k % len(FAMILIES)]
        p = make_soo_instance(fam, int(rng.choice([2, 5, 10])), int(rng.integers(1 << 30)),
                              max_fes=int(rng.integers(3, 40)) * 100)
        traj, _ = episode(MetaPolicy.init(int(rng.integers(1 << 30))), p, int(rng.integers(1 << 30)), "sample")
        direct = (traj.y0 - traj.final_best) / (traj.y0 - traj.f_opt)
        worst = max(worst, abs(float(np.sum(traj.rewards)) - direct))
    ok = worst < 1e-10
    criterion(9, ok, f"max |sum r_t - normalized gain| over 200 episodes {worst:.1e}")
    assert ok
