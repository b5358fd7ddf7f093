"""Independent reference implementations used by the metric tests."""

import math

import numpy as np


def hv_grid(front, ref, res=1000):
    """Grid-count hypervolume on the box [0, ref] at ``res`` x ``res`` cell centres."""
    front = np.asarray(front, dtype=float).reshape(-1, 2)
    hx, hy = ref[0] / res, ref[1] / res
    cx = (np.arange(res) + 0.5) * hx
    cy = (np.arange(res) + 0.5) * hy
    if front.size == 0:
        return 0.0
    # a cell is dominated when some point is <= its centre in both objectives
    dominated = (front[:, 0][:, None, None] <= cx[None, :, None]) & (front[:, 1][:, None, None] <= cy[None, None, :])
    return float(np.any(dominated, axis=0).sum() * hx * hy)


def anti_nfl_direct(perf_train, perf_tests):
    total = 0.0
    for p in perf_tests:
        total += (p - perf_train) / perf_train
    return math.exp(total / len(perf_tests))


def log_gap_direct(y0, y_final, f_opt, eps=1e-8):
    if y_final - f_opt <= eps:
        return 1.0
    a = math.log10(y0 - f_opt + eps)
    b = math.log10(y_final - f_opt + eps)
    c = math.log10(eps)
    return min(max((a - b) / (a - c), 0.0), 1.0)
