"""Dimension-free state features and the per-step reward."""

from __future__ import annotations

import math

import numpy as np

from metabbo import kernels

N_FEATURES = 9
EPS = 1e-12

# written into run manifests so every result names the state it was trained on
FEATURE_DESCRIPTIONS = (
    "progress t/T",
    "log10(best gap + eps) / max(|log10(initial gap + eps)|, 1)",
    "mean pairwise distance / box diagonal",
    "generations since last improvement / T",
    "(mean Y - f_opt) / initial gap",
    "std Y / initial gap",
    "(best Y - min current Y) / initial gap",
    "fes_used / max_fes",
    "bias 1",
)
REWARD_DESCRIPTION = "(previous best - new best) / (y0 - f_opt)"


def _log_gap(gap: float) -> float:
    return math.log10(max(gap, 0.0) + EPS)


def extract_features(state, problem, t: int, T: int, f_opt: float | None = None) -> np.ndarray:
    """Nine optimization-status features of ``state`` at step ``t`` of ``T``.

    (1) progress t/T; (2) log10 best gap divided by the initial one's magnitude
    (at least 1); (3) mean pairwise distance over the box diagonal;
    (4) stagnation generations / T; (5) mean Y and (6) std Y relative to the
    initial gap; (7) (best - min current Y) relative to the initial gap;
    (8) fraction of budget used; (9) bias 1.
    """
    if f_opt is None:
        f_opt = problem.f_opt if problem.f_opt is not None else 0.0
    T = max(int(T), 1)
    Y = state.Y
    scale = abs(state.y0 - f_opt) + EPS
    init_log = max(abs(_log_gap(state.y0 - f_opt)), 1.0)
    diag = float(np.linalg.norm(problem.ub - problem.lb))
    stagnation = state.generation - state.memory.get("last_improvement", 0)
    feats = np.array(
        [
            min(max(t / T, 0.0), 1.0),
            _log_gap(state.best_y - f_opt) / init_log,
            kernels.mean_pairwise_distance(state.X) / diag,
            min(max(stagnation / T, 0.0), 1.0),
            (float(np.mean(Y)) - f_opt) / scale,
            float(np.std(Y)) / scale,
            (state.best_y - float(np.min(Y))) / scale,
            min(max(problem.fes_used / problem.max_fes, 0.0), 1.0),
            1.0,
        ]
    )
    return np.nan_to_num(feats, nan=0.0, posinf=1e6, neginf=-1e6)


def reward(prev_best: float, new_best: float, y0: float, f_opt: float) -> float:
    """Improvement of the best-so-far value as a fraction of the initial gap."""
    denom = y0 - f_opt
    if not denom > 0:
        return 0.0
    return (prev_best - new_best) / denom
