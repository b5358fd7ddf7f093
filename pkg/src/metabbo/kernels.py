"""Hot numeric kernels, each in a numba and a pure-numpy flavour.

The public names (``eval_family``, ``de_trials``, ...) dispatch on
``metabbo._accel.BACKEND``. The ``*_nb`` / ``*_np`` variants are importable
directly so tests and ``benchmarks/bench_kernels.py`` can compare them.

Kernels consume pre-drawn random numbers only; every RNG call happens in the
caller, which keeps trajectories identical across backends and workers.
"""

from __future__ import annotations

import math

import numpy as np

from metabbo._accel import BACKEND, njit

SPHERE, ELLIPSOID, RASTRIGIN, ROSENBROCK, SCHWEFEL = 0, 1, 2, 3, 4
ACKLEY, GRIEWANK, DIFFERENT_POWERS, SHARP_RIDGE, KATSUURA = 5, 6, 7, 8, 9
N_FAMILIES = 10

_KATSUURA_TERMS = 32


# --------------------------------------------------------------------------
# objective families on already-transformed coordinates z = R (x - o)
# --------------------------------------------------------------------------


@njit
def _family_row(fid, z):
    d = z.shape[0]
    if fid == SPHERE:
        s = 0.0
        for i in range(d):
            s += z[i] * z[i]
        return s
    if fid == ELLIPSOID:
        s = 0.0
        for i in range(d):
            w = 1.0 if d == 1 else 10.0 ** (6.0 * i / (d - 1))
            s += w * z[i] * z[i]
        return s
    if fid == RASTRIGIN:
        s = 10.0 * d
        for i in range(d):
            s += z[i] * z[i] - 10.0 * math.cos(2.0 * math.pi * z[i])
        return s
    if fid == ROSENBROCK:
        s = 0.0
        for i in range(d - 1):
            a = z[i] + 1.0
            b = z[i + 1] + 1.0
            s += 100.0 * (b - a * a) ** 2 + (a - 1.0) ** 2
        return s
    if fid == SCHWEFEL:
        s = 0.0
        c = 0.0
        for i in range(d):
            c += z[i]
            s += c * c
        return s
    if fid == ACKLEY:
        sq = 0.0
        cs = 0.0
        for i in range(d):
            sq += z[i] * z[i]
            cs += math.cos(2.0 * math.pi * z[i])
        return (20.0 - 20.0 * math.exp(-0.2 * math.sqrt(sq / d))) + (math.e - math.exp(cs / d))
    if fid == GRIEWANK:
        sq = 0.0
        pr = 1.0
        for i in range(d):
            sq += z[i] * z[i]
            pr *= math.cos(z[i] / math.sqrt(i + 1.0))
        return 1.0 + sq / 4000.0 - pr
    if fid == DIFFERENT_POWERS:
        s = 0.0
        for i in range(d):
            p = 2.0 if d == 1 else 2.0 + 4.0 * i / (d - 1)
            s += abs(z[i]) ** p
        return math.sqrt(s)
    if fid == SHARP_RIDGE:
        s = 0.0
        for i in range(1, d):
            s += z[i] * z[i]
        return z[0] * z[0] + 100.0 * math.sqrt(s)
    # KATSUURA
    expo = 10.0 / d**1.2
    pr = 1.0
    for i in range(d):
        acc = 0.0
        p2 = 2.0
        for j in range(_KATSUURA_TERMS):
            v = p2 * z[i]
            acc += abs(v - math.floor(v + 0.5)) / p2
            p2 *= 2.0
        pr *= (1.0 + (i + 1.0) * acc) ** expo
    return 10.0 / (d * d) * pr - 10.0 / (d * d)


@njit
def eval_family_nb(fid, Z):
    n = Z.shape[0]
    out = np.empty(n)
    for k in range(n):
        out[k] = _family_row(fid, Z[k])
    return out


def eval_family_np(fid: int, Z: np.ndarray) -> np.ndarray:
    n, d = Z.shape
    idx = np.arange(d, dtype=float)
    if fid == SPHERE:
        return np.sum(Z * Z, axis=1)
    if fid == ELLIPSOID:
        w = np.ones(d) if d == 1 else 10.0 ** (6.0 * idx / (d - 1))
        return np.sum(w * Z * Z, axis=1)
    if fid == RASTRIGIN:
        return 10.0 * d + np.sum(Z * Z - 10.0 * np.cos(2.0 * np.pi * Z), axis=1)
    if fid == ROSENBROCK:
        A = Z[:, :-1] + 1.0
        B = Z[:, 1:] + 1.0
        return np.sum(100.0 * (B - A * A) ** 2 + (A - 1.0) ** 2, axis=1)
    if fid == SCHWEFEL:
        C = np.cumsum(Z, axis=1)
        return np.sum(C * C, axis=1)
    if fid == ACKLEY:
        sq = np.sum(Z * Z, axis=1)
        cs = np.sum(np.cos(2.0 * np.pi * Z), axis=1)
        return (20.0 - 20.0 * np.exp(-0.2 * np.sqrt(sq / d))) + (np.e - np.exp(cs / d))
    if fid == GRIEWANK:
        pr = np.prod(np.cos(Z / np.sqrt(idx + 1.0)), axis=1)
        return 1.0 + np.sum(Z * Z, axis=1) / 4000.0 - pr
    if fid == DIFFERENT_POWERS:
        p = np.full(d, 2.0) if d == 1 else 2.0 + 4.0 * idx / (d - 1)
        return np.sqrt(np.sum(np.abs(Z) ** p, axis=1))
    if fid == SHARP_RIDGE:
        return Z[:, 0] ** 2 + 100.0 * np.sqrt(np.sum(Z[:, 1:] ** 2, axis=1))
    if fid == KATSUURA:
        two_j = 2.0 ** np.arange(1, _KATSUURA_TERMS + 1)
        V = Z[:, :, None] * two_j
        acc = np.sum(np.abs(V - np.floor(V + 0.5)) / two_j, axis=2)
        expo = 10.0 / d**1.2
        pr = np.prod((1.0 + (idx + 1.0) * acc) ** expo, axis=1)
        return 10.0 / (d * d) * pr - 10.0 / (d * d)
    raise ValueError(f"unknown family id {fid}")


# --------------------------------------------------------------------------
# fused DE mutation + binomial crossover + clip
#   v_i = X[base_i] + F1_i (X[d1_i] - X[d2_i]) + F2_i (X[e1_i] - pool[e2_i])
# --------------------------------------------------------------------------


@njit
def de_trials_nb(X, pool, base, d1, d2, e1, e2, F1, F2, CR, U, jrand, lb, ub):
    n, d = X.shape
    out = np.empty((n, d))
    for i in range(n):
        for j in range(d):
            if U[i, j] < CR[i] or j == jrand[i]:
                v = X[base[i], j] + F1[i] * (X[d1[i], j] - X[d2[i], j])
                v = v + F2[i] * (X[e1[i], j] - pool[e2[i], j])
            else:
                v = X[i, j]
            if v < lb[j]:
                v = lb[j]
            elif v > ub[j]:
                v = ub[j]
            out[i, j] = v
    return out


def de_trials_np(X, pool, base, d1, d2, e1, e2, F1, F2, CR, U, jrand, lb, ub):
    n, d = X.shape
    V = X[base] + F1[:, None] * (X[d1] - X[d2])
    V = V + F2[:, None] * (X[e1] - pool[e2])
    mask = U < CR[:, None]
    mask[np.arange(n), jrand] = True
    return np.clip(np.where(mask, V, X), lb, ub)


# --------------------------------------------------------------------------
# distinct donor indices: raw[i, c] is uniform in [0, n - 1 - c); row i maps
# to c-th index avoiding i and the c earlier picks
# --------------------------------------------------------------------------


@njit
def distinct_indices_nb(raw):
    n, k = raw.shape
    out = np.empty((n, k), dtype=np.int64)
    ex = np.empty(k + 1, dtype=np.int64)
    for i in range(n):
        ex[0] = i
        m = 1
        for c in range(k):
            u = raw[i, c]
            for e in range(m):
                if u >= ex[e]:
                    u += 1
            out[i, c] = u
            # keep ex sorted ascending
            pos = m
            while pos > 0 and ex[pos - 1] > u:
                ex[pos] = ex[pos - 1]
                pos -= 1
            ex[pos] = u
            m += 1
    return out


def distinct_indices_np(raw):
    n, k = raw.shape
    chosen = [np.arange(n)]
    for c in range(k):
        ex = np.sort(np.column_stack(chosen), axis=1)
        u = raw[:, c].astype(np.int64)
        for e in range(ex.shape[1]):
            u = u + (u >= ex[:, e])
        chosen.append(u)
    return np.column_stack(chosen[1:])


# --------------------------------------------------------------------------
# PSO velocity/position update with velocity clamp and box clip
# --------------------------------------------------------------------------


@njit
def pso_update_nb(X, V, P, g, w, c1, c2, R1, R2, vmax, lb, ub):
    n, d = X.shape
    Xn = np.empty((n, d))
    Vn = np.empty((n, d))
    for i in range(n):
        for j in range(d):
            v = w * V[i, j] + c1 * R1[i, j] * (P[i, j] - X[i, j]) + c2 * R2[i, j] * (g[j] - X[i, j])
            if v > vmax[j]:
                v = vmax[j]
            elif v < -vmax[j]:
                v = -vmax[j]
            x = X[i, j] + v
            if x < lb[j]:
                x = lb[j]
            elif x > ub[j]:
                x = ub[j]
            Vn[i, j] = v
            Xn[i, j] = x
    return Xn, Vn


def pso_update_np(X, V, P, g, w, c1, c2, R1, R2, vmax, lb, ub):
    Vn = w * V + c1 * R1 * (P - X) + c2 * R2 * (g - X)
    Vn = np.clip(Vn, -vmax, vmax)
    return np.clip(X + Vn, lb, ub), Vn


# --------------------------------------------------------------------------
# mean pairwise Euclidean distance
# --------------------------------------------------------------------------


@njit
def mean_pairwise_distance_nb(X):
    n, d = X.shape
    if n < 2:
        return 0.0
    total = 0.0
    for a in range(n - 1):
        for b in range(a + 1, n):
            s = 0.0
            for j in range(d):
                t = X[a, j] - X[b, j]
                s += t * t
            total += math.sqrt(s)
    return total / (n * (n - 1) / 2.0)


def mean_pairwise_distance_np(X: np.ndarray) -> float:
    n = X.shape[0]
    if n < 2:
        return 0.0
    sq = np.sum(X * X, axis=1)
    D2 = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    iu = np.triu_indices(n, k=1)
    return float(np.mean(np.sqrt(np.maximum(D2[iu], 0.0))))


# --------------------------------------------------------------------------
# 2-D hypervolume sweep over points sorted by (f1, f2) ascending,
# all strictly dominating ref
# --------------------------------------------------------------------------


@njit
def hv_sweep_nb(P, r1, r2):
    area = 0.0
    floor = r2
    for k in range(P.shape[0]):
        if P[k, 1] < floor:
            area += (r1 - P[k, 0]) * (floor - P[k, 1])
            floor = P[k, 1]
    return area


def hv_sweep_np(P: np.ndarray, r1: float, r2: float) -> float:
    if P.shape[0] == 0:
        return 0.0
    prev = np.minimum.accumulate(np.concatenate(([r2], P[:, 1])))
    gain = np.maximum(prev[:-1] - P[:, 1], 0.0)
    return float(np.sum((r1 - P[:, 0]) * gain))


if BACKEND == "numba":
    eval_family = eval_family_nb
    de_trials = de_trials_nb
    distinct_indices = distinct_indices_nb
    pso_update = pso_update_nb
    mean_pairwise_distance = mean_pairwise_distance_nb
    hv_sweep = hv_sweep_nb
else:
    eval_family = eval_family_np
    de_trials = de_trials_np
    distinct_indices = distinct_indices_np
    pso_update = pso_update_np
    mean_pairwise_distance = mean_pairwise_distance_np
    hv_sweep = hv_sweep_np
