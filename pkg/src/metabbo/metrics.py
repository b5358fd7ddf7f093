"""Scores derived from run metadata: Perf, learning efficiency, Anti-NFL,
hypervolume and average-rank tables."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from metabbo import kernels

if TYPE_CHECKING:
    from metabbo.metadata import SuiteMetadata
    from metabbo.problems import Suite

PERF_EPS = 1e-8


class UndefinedIndicator(ValueError):
    pass


# --------------------------------------------------------------------------
# Pareto utilities
# --------------------------------------------------------------------------


def nondominated_mask(F) -> np.ndarray:
    """True for rows of ``F`` not dominated by any other row (minimization)."""
    F = np.asarray(F, dtype=float)
    if F.shape[0] == 0:
        return np.zeros(0, dtype=bool)
    le = np.all(F[:, None, :] <= F[None, :, :], axis=2)
    lt = np.any(F[:, None, :] < F[None, :, :], axis=2)
    dominates = le & lt  # dominates[j, i]: row j dominates row i
    return ~np.any(dominates, axis=0)


def hypervolume_2d(front, ref) -> float:
    """Area dominated by ``front`` and bounded by ``ref`` (minimization).

    Points that do not strictly dominate ``ref`` contribute nothing and are
    dropped; dominated points are harmless to the sweep.
    """
    P = np.asarray(front, dtype=float).reshape(-1, 2)
    r1, r2 = float(ref[0]), float(ref[1])
    P = P[(P[:, 0] < r1) & (P[:, 1] < r2)]
    if P.shape[0] == 0:
        return 0.0
    P = np.ascontiguousarray(P[np.lexsort((P[:, 1], P[:, 0]))])
    return float(kernels.hv_sweep(P, r1, r2))


# --------------------------------------------------------------------------
# Perf
# --------------------------------------------------------------------------


def log_gap_score(y0: float, y_final: float, f_opt: float, eps: float = PERF_EPS) -> float:
    """Fraction of the log10 distance from the initial gap down to ``eps`` covered."""
    gap_final = max(y_final - f_opt, 0.0)
    if gap_final <= eps:
        return 1.0
    top = math.log10(max(y0 - f_opt, 0.0) + eps)
    floor = math.log10(eps)
    if top <= floor:
        return 0.0
    score = (top - math.log10(gap_final + eps)) / (top - floor)
    return min(max(score, 0.0), 1.0)


def moo_run_score(final_Y, ref, ideal) -> float:
    F = np.asarray(final_Y, dtype=float).reshape(-1, 2)
    box = (ref[0] - ideal[0]) * (ref[1] - ideal[1])
    return min(max(hypervolume_2d(F[nondominated_mask(F)], ref) / box, 0.0), 1.0)


@dataclass
class PerfReport:
    """Normalized scores plus raw final values for one algorithm on one suite.

    ``final_mean``/``final_std`` are best objective values for SOO and final
    hypervolumes for MOO (``higher_is_better`` tells which).
    """

    problem_type: str
    instance_scores: dict[str, float]
    run_scores: dict[str, list[float]]
    final_mean: dict[str, float]
    final_std: dict[str, float]
    higher_is_better: bool = False

    @property
    def perf(self) -> float:
        if not self.instance_scores:
            return 0.0
        return float(np.mean(list(self.instance_scores.values())))


def _run_y0_final(Y_list) -> tuple[float, float]:
    y0 = float(np.min(np.asarray(Y_list[0], dtype=float)))
    y_final = min(float(np.min(np.asarray(y, dtype=float))) for y in Y_list)
    return y0, y_final


def perf_score(md: "SuiteMetadata", suite: "Suite", eps: float = PERF_EPS) -> PerfReport:
    suite_ids = {p.problem_id for p in suite.instances}
    unknown = [pid for pid in md.problem_ids() if pid not in suite_ids]
    if unknown:
        raise ValueError(f"metadata instances not in suite {suite.name!r}: {unknown}")
    moo = md.problem_type == "MOO"
    inst, runs, mean, std = {}, {}, {}, {}
    for rec in md.all_data:
        problem = suite.get(rec.problem_id)
        scores, finals = [], []
        for run in rec.runs():
            if not run.Y:
                raise ValueError(f"{rec.problem_id}: run without logged generations")
            if moo:
                last = np.asarray(run.Y[-1], dtype=float)
                ideal = problem.ideal_point
                ref = problem.reference_point
                scores.append(moo_run_score(last, ref, ideal))
                finals.append(hypervolume_2d(last[nondominated_mask(last)], ref))
            else:
                y0, y_final = _run_y0_final(run.Y)
                scores.append(log_gap_score(y0, y_final, problem.f_opt, eps))
                finals.append(y_final)
        runs[rec.problem_id] = scores
        inst[rec.problem_id] = float(np.mean(scores)) if scores else 0.0
        mean[rec.problem_id] = float(np.mean(finals)) if finals else math.nan
        std[rec.problem_id] = float(np.std(finals)) if finals else math.nan
    return PerfReport(md.problem_type, inst, runs, mean, std, higher_is_better=moo)


# --------------------------------------------------------------------------
# learning efficiency and Anti-NFL
# --------------------------------------------------------------------------


def learning_efficiency(snapshots: Sequence, md_per_snapshot: Sequence["SuiteMetadata"], suite: "Suite"):
    """``[(epoch, Perf / training hours), ...]`` aligned with ``snapshots``."""
    if len(snapshots) != len(md_per_snapshot):
        raise ValueError("snapshots and metadata are not aligned")
    out = []
    for snap, md in zip(snapshots, md_per_snapshot):
        hours = float(snap.hours)
        if not hours > 0:
            raise ValueError(f"snapshot {snap.epoch}: training time must be > 0 hours, got {hours}")
        out.append((int(snap.epoch), perf_score(md, suite).perf / hours))
    return out


def efficiency_from_perf(perf: float, hours: float) -> float:
    if not hours > 0:
        raise ValueError(f"training time must be > 0 hours, got {hours}")
    return perf / hours


def anti_nfl(perf_train: float, perf_tests: Sequence[float]) -> float:
    """``exp`` of the mean relative Perf change from the train suite to each test suite."""
    if len(perf_tests) < 1:
        raise ValueError("need at least one test suite")
    if perf_train == 0:
        raise UndefinedIndicator("Anti-NFL is undefined for a train-suite Perf of 0")
    rel = [(p - perf_train) / perf_train for p in perf_tests]
    try:
        return math.exp(sum(rel) / len(rel))
    except OverflowError:
        return math.inf


# --------------------------------------------------------------------------
# ranks
# --------------------------------------------------------------------------


@dataclass
class Ranking:
    per_instance: dict[str, dict[str, float]]
    average: dict[str, float]
    order: list[str] = field(default_factory=list)


def rank_table(reports: Mapping[str, PerfReport]) -> Ranking:
    """Average rank of each algorithm over instances, ties sharing the mean rank."""
    if not reports:
        raise ValueError("no reports to rank")
    algs = list(reports)
    ids = set(reports[algs[0]].final_mean)
    for a in algs[1:]:
        if set(reports[a].final_mean) != ids:
            raise ValueError(f"instance sets differ between {algs[0]!r} and {a!r}")
    per_instance: dict[str, dict[str, float]] = {}
    for pid in sorted(ids):
        vals = np.array([reports[a].final_mean[pid] for a in algs], dtype=float)
        if reports[algs[0]].higher_is_better:
            vals = -vals
        ranks = rankdata(vals, method="average")
        per_instance[pid] = {a: float(r) for a, r in zip(algs, ranks)}
    average = {a: float(np.mean([per_instance[p][a] for p in per_instance])) for a in algs}
    order = sorted(algs, key=lambda a: (average[a], a))
    return Ranking(per_instance, average, order)


# --------------------------------------------------------------------------
# convergence curves
# --------------------------------------------------------------------------


def convergence_rows(md: "SuiteMetadata", suite: "Suite | None" = None):
    """``(instance_id, generation, median, q25, q75)`` of the best-so-far value.

    For bi-objective data the tracked value is the hypervolume of each logged
    population (needs ``suite`` for the reference point).
    """
    rows = []
    for rec in md.all_data:
        curves = []
        for run in rec.runs():
            if md.problem_type == "MOO":
                ref = suite.get(rec.problem_id).reference_point if suite else (1.1, 1.1)
                vals = []
                for y in run.Y:
                    Y = np.asarray(y, dtype=float)
                    vals.append(hypervolume_2d(Y[nondominated_mask(Y)], ref))
                curves.append(np.maximum.accumulate(np.asarray(vals)))
            else:
                mins = np.array([np.min(np.asarray(y, dtype=float)) for y in run.Y])
                curves.append(np.minimum.accumulate(mins))
        if not curves:
            continue
        length = min(len(c) for c in curves)
        C = np.vstack([c[:length] for c in curves])
        q25, med, q75 = np.percentile(C, [25, 50, 75], axis=0)
        for g in range(length):
            rows.append((rec.problem_id, g, float(med[g]), float(q25[g]), float(q75[g])))
    return rows
