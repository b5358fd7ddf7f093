"""Low-level population optimizers: random search, PSO, DE, SHADE.

All steps are generation-granular: a step either evaluates a full population
of ``n`` rows or raises :class:`BudgetExhausted` without touching the state
or the RNG. States own their arrays; steps return a new state and never
mutate the one passed in.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from metabbo import kernels
from metabbo.metrics import hypervolume_2d, nondominated_mask
from metabbo.problems import BasicProblem, BudgetExhausted

STRATEGIES = ("rand/1/bin", "best/1/bin", "current-to-best/1/bin")
RAND_1, BEST_1, CURRENT_TO_BEST_1 = 0, 1, 2
OPTIMIZERS = ("RS", "DE", "PSO", "SHADE")

POP_SIZE = 100
SHADE_H = 100
SHADE_P = 0.11
PSO_W = 0.729
PSO_C = 1.49445
PSO_VMAX_FRACTION = 0.2


class PopulationTooSmall(ValueError):
    pass


@dataclass(frozen=True)
class AlgorithmDesign:
    """Per-generation DE configuration chosen by a meta policy."""

    F: float = 0.5
    CR: float = 0.9
    strategy: int = RAND_1

    def __post_init__(self):
        if not 0 <= int(self.strategy) < len(STRATEGIES):
            raise ValueError(f"strategy index must be in [0, {len(STRATEGIES)}), got {self.strategy}")
        object.__setattr__(self, "F", float(min(max(self.F, 0.0), 1.0)))
        object.__setattr__(self, "CR", float(min(max(self.CR, 0.0), 1.0)))
        object.__setattr__(self, "strategy", int(self.strategy))

    @property
    def strategy_name(self) -> str:
        return STRATEGIES[self.strategy]


DEFAULT_DE_DESIGN = AlgorithmDesign(0.5, 0.9, RAND_1)


@dataclass
class OptimizerState:
    X: np.ndarray
    Y: np.ndarray
    best_x: np.ndarray
    best_y: float
    y0: float
    generation: int = 0
    memory: dict[str, Any] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def is_moo(self) -> bool:
        return self.Y.ndim == 2


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def _require(problem: BasicProblem, n: int) -> None:
    if problem.remaining < n:
        raise BudgetExhausted(n, problem.remaining)


def _moo_score(F: np.ndarray, problem: BasicProblem) -> float:
    """Negated hypervolume, so smaller is better like the SOO objective."""
    return -hypervolume_2d(F[nondominated_mask(F)], problem.reference_point)


def init_population(problem: BasicProblem, n: int = POP_SIZE, rng=None) -> OptimizerState:
    if n < 4:
        raise PopulationTooSmall("population too small for DE: need n >= 4")
    rng = _as_rng(rng)
    _require(problem, n)
    X = rng.uniform(problem.lb, problem.ub, size=(n, problem.dim))
    Y = problem.eval(X)
    if Y.ndim == 2:
        best = _moo_score(Y, problem)
        mask = nondominated_mask(Y)
        memory = {"front_x": X[mask].copy(), "front_y": Y[mask].copy()}
        k = int(np.argmin(Y.sum(axis=1)))
        return OptimizerState(X, Y, X[k].copy(), best, best, 0, {**memory, "last_improvement": 0})
    k = int(np.argmin(Y))
    return OptimizerState(X, Y, X[k].copy(), float(Y[k]), float(Y[k]), 0, {"last_improvement": 0})


def _advance(state: OptimizerState, X, Y, memory, problem, cand_X=None, cand_Y=None) -> OptimizerState:
    """New state after a generation; best-so-far also looks at candidates."""
    gen = state.generation + 1
    memory = dict(memory)
    if Y.ndim == 2:
        front_x = np.vstack([state.memory["front_x"], X if cand_X is None else cand_X])
        front_y = np.vstack([state.memory["front_y"], Y if cand_Y is None else cand_Y])
        mask = nondominated_mask(front_y)
        memory["front_x"], memory["front_y"] = front_x[mask], front_y[mask]
        best = _moo_score(memory["front_y"], problem)
        best_x = state.best_x
        if best < state.best_y:
            memory["last_improvement"] = gen
            best_x = X[int(np.argmin(Y.sum(axis=1)))].copy()
        else:
            best = state.best_y
        return OptimizerState(X, Y, best_x, best, state.y0, gen, memory)
    pool_X = X if cand_X is None else cand_X
    pool_Y = Y if cand_Y is None else cand_Y
    k = int(np.argmin(pool_Y))
    best_x, best_y = state.best_x, state.best_y
    if pool_Y[k] < best_y:
        best_x, best_y = pool_X[k].copy(), float(pool_Y[k])
        memory["last_improvement"] = gen
    return OptimizerState(X, Y, best_x, best_y, state.y0, gen, memory)


# --------------------------------------------------------------------------
# index sampling
# --------------------------------------------------------------------------


def _skip_sorted(u: np.ndarray, excluded: list[np.ndarray]) -> np.ndarray:
    """Map ``u`` in [0, m - len(excluded)) to [0, m) skipping excluded values.

    ``excluded`` entries must be pairwise distinct per row.
    """
    ex = np.sort(np.column_stack(excluded), axis=1)
    for c in range(ex.shape[1]):
        u = u + (u >= ex[:, c])
    return u


def draw_distinct_indices(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """(n, k) indices; row i holds k distinct values from range(n), none equal to i."""
    if k > n - 1:
        raise PopulationTooSmall(f"need at least {k + 1} individuals, got {n}")
    raw = rng.integers(0, n - 1 - np.arange(k), size=(n, k))
    return kernels.distinct_indices(raw)


# --------------------------------------------------------------------------
# DE with an external design
# --------------------------------------------------------------------------


def de_trial_vectors(X, design: AlgorithmDesign, r, best_idx: int, U, jrand, lb, ub) -> np.ndarray:
    """Trial population for one DE generation given pre-drawn randomness.

    ``r`` holds three distinct donor indices per row.
    """
    n = X.shape[0]
    idx = np.arange(n)
    F = np.full(n, design.F)
    CR = np.full(n, design.CR)
    best = np.full(n, best_idx)
    r = np.asarray(r)
    if design.strategy == RAND_1:
        base, d1, d2, F2 = r[:, 0], r[:, 1], r[:, 2], np.zeros(n)
        e1 = e2 = idx
    elif design.strategy == BEST_1:
        base, d1, d2, F2 = best, r[:, 0], r[:, 1], np.zeros(n)
        e1 = e2 = idx
    else:
        base, d1, d2, F2 = idx, best, idx, F
        e1, e2 = r[:, 0], r[:, 1]
    return kernels.de_trials(X, X, base, d1, d2, e1, e2, F, F2, CR, U, jrand, lb, ub)


def _greedy_replace(state: OptimizerState, trials, Yt):
    if Yt.ndim == 2:
        better = np.all(Yt <= state.Y, axis=1)
    else:
        better = Yt <= state.Y
    X = np.where(better[:, None], trials, state.X)
    Y = np.where(better[:, None], Yt, state.Y) if Yt.ndim == 2 else np.where(better, Yt, state.Y)
    return X, Y, better


def _best_index(state: OptimizerState) -> int:
    if state.is_moo:
        return int(np.argmin(state.Y.sum(axis=1)))
    return int(np.argmin(state.Y))


def de_step(state: OptimizerState, design: AlgorithmDesign, problem: BasicProblem, rng) -> OptimizerState:
    rng = _as_rng(rng)
    n, d = state.X.shape
    _require(problem, n)
    r = draw_distinct_indices(n, 3, rng)
    U = rng.random((n, d))
    jrand = rng.integers(0, d, size=n)
    trials = de_trial_vectors(state.X, design, r, _best_index(state), U, jrand, problem.lb, problem.ub)
    Yt = problem.eval(trials)
    X, Y, _ = _greedy_replace(state, trials, Yt)
    if Yt.ndim == 2:
        return _advance(state, X, Y, state.memory, problem, trials, Yt)
    return _advance(state, X, Y, state.memory, problem)


# --------------------------------------------------------------------------
# SHADE
# --------------------------------------------------------------------------


def weighted_lehmer_mean(values, weights) -> float:
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    return float(np.sum(weights * values**2) / np.sum(weights * values))


def archive_insert(archive: np.ndarray, rows: np.ndarray, cap: int, rng: np.random.Generator) -> np.ndarray:
    """Append ``rows``; if the cap is exceeded evict uniformly random members."""
    merged = np.vstack([archive, rows]) if rows.size else archive
    if merged.shape[0] > cap:
        keep = np.sort(rng.choice(merged.shape[0], size=cap, replace=False))
        merged = merged[keep]
    return merged


def _shade_memory(state: OptimizerState) -> dict[str, Any]:
    mem = dict(state.memory)
    if "M_F" not in mem:
        mem["M_F"] = np.full(SHADE_H, 0.5)
        mem["M_CR"] = np.full(SHADE_H, 0.5)
        mem["k"] = 0
        mem["archive"] = np.empty((0, state.X.shape[1]))
    return mem


def _sample_cauchy_F(loc: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    F = loc + 0.1 * np.tan(np.pi * (rng.random(loc.shape[0]) - 0.5))
    bad = F <= 0
    while np.any(bad):
        F[bad] = loc[bad] + 0.1 * np.tan(np.pi * (rng.random(int(bad.sum())) - 0.5))
        bad = F <= 0
    return np.minimum(F, 1.0)


def shade_step(state: OptimizerState, problem: BasicProblem, rng) -> OptimizerState:
    rng = _as_rng(rng)
    n, d = state.X.shape
    _require(problem, n)
    mem = _shade_memory(state)
    M_F, M_CR, archive = mem["M_F"], mem["M_CR"], mem["archive"]

    slot = rng.integers(0, SHADE_H, size=n)
    CR = np.clip(rng.normal(M_CR[slot], 0.1), 0.0, 1.0)
    F = _sample_cauchy_F(M_F[slot], rng)

    n_pbest = max(2, int(round(SHADE_P * n)))
    order = np.argsort(state.Y, kind="stable")
    pbest = order[rng.integers(0, n_pbest, size=n)]
    idx = np.arange(n)
    r1 = _skip_sorted(rng.integers(0, n - 1, size=n), [idx])
    pool = np.vstack([state.X, archive])
    r2 = _skip_sorted(rng.integers(0, pool.shape[0] - 2, size=n), [idx, r1])

    U = rng.random((n, d))
    jrand = rng.integers(0, d, size=n)
    trials = kernels.de_trials(state.X, pool, idx, pbest, idx, r1, r2, F, F, CR, U, jrand, problem.lb, problem.ub)
    Yt = problem.eval(trials)

    success = Yt < state.Y
    X, Y, _ = _greedy_replace(state, trials, Yt)
    mem["archive"] = archive_insert(archive, state.X[success], n, rng)
    if np.any(success):
        delta = state.Y[success] - Yt[success]
        w = delta / delta.sum()
        M_F = M_F.copy()
        M_CR = M_CR.copy()
        M_F[mem["k"]] = weighted_lehmer_mean(F[success], w)
        M_CR[mem["k"]] = float(np.sum(w * CR[success]))
        mem["M_F"], mem["M_CR"] = M_F, M_CR
        mem["k"] = (mem["k"] + 1) % SHADE_H
    return _advance(state, X, Y, mem, problem)


# --------------------------------------------------------------------------
# PSO
# --------------------------------------------------------------------------


def pso_step(
    state: OptimizerState,
    problem: BasicProblem,
    rng,
    *,
    w: float = PSO_W,
    c1: float = PSO_C,
    c2: float = PSO_C,
) -> OptimizerState:
    rng = _as_rng(rng)
    n, d = state.X.shape
    _require(problem, n)
    mem = dict(state.memory)
    if "V" not in mem:
        mem["V"] = np.zeros((n, d))
        mem["P"] = state.X.copy()
        mem["PY"] = state.Y.copy()
    vmax = PSO_VMAX_FRACTION * (problem.ub - problem.lb)
    R1 = rng.random((n, d))
    R2 = rng.random((n, d))
    Xn, Vn = kernels.pso_update(
        state.X, mem["V"], mem["P"], state.best_x, w, c1, c2, R1, R2, vmax, problem.lb, problem.ub
    )
    Yn = problem.eval(Xn)
    improved = Yn < mem["PY"]
    mem["V"] = Vn
    mem["P"] = np.where(improved[:, None], Xn, mem["P"])
    mem["PY"] = np.where(improved, Yn, mem["PY"])
    return _advance(state, Xn, Yn, mem, problem)


# --------------------------------------------------------------------------
# random search
# --------------------------------------------------------------------------


def random_search_step(state: OptimizerState, problem: BasicProblem, rng) -> OptimizerState:
    rng = _as_rng(rng)
    n, d = state.X.shape
    _require(problem, n)
    X = rng.uniform(problem.lb, problem.ub, size=(n, d))
    Y = problem.eval(X)
    return _advance(state, X, Y, state.memory, problem)


# --------------------------------------------------------------------------
# run records
# --------------------------------------------------------------------------


@dataclass
class RunRecord:
    """Everything one run logs.

    ``X``/``Y`` hold the logged generations (every ``log_every``-th plus the
    last one); ``best_curve`` always has one entry per generation. For
    bi-objective runs ``best_curve`` and ``final_best`` are negated
    hypervolumes.
    """

    problem_id: str
    algorithm: str
    seed: int
    X: list[np.ndarray]
    Y: list[np.ndarray]
    T: float
    best_curve: list[float]
    generations: int
    fes_used: int
    y0: float
    final_best: float
    final_x: np.ndarray
    log_every: int = 1

    def to_run_dict(self) -> dict[str, Any]:
        return {"X": [x.tolist() for x in self.X], "Y": [y.tolist() for y in self.Y], "T": float(self.T)}


class RunLogger:
    """Collects per-generation snapshots with optional thinning."""

    def __init__(self, log_every: int = 1):
        if log_every < 1:
            raise ValueError("log_every must be >= 1")
        self.log_every = log_every
        self.X: list[np.ndarray] = []
        self.Y: list[np.ndarray] = []
        self.best_curve: list[float] = []
        self._last: OptimizerState | None = None
        self._last_logged = -1

    def log(self, state: OptimizerState) -> None:
        self.best_curve.append(float(state.best_y))
        self._last = state
        if state.generation % self.log_every == 0:
            self.X.append(state.X.copy())
            self.Y.append(state.Y.copy())
            self._last_logged = state.generation

    def finish(self) -> None:
        if self._last is not None and self._last_logged != self._last.generation:
            self.X.append(self._last.X.copy())
            self.Y.append(self._last.Y.copy())
            self._last_logged = self._last.generation


def _baseline_step(optimizer_id: str):
    if optimizer_id == "RS":
        return random_search_step
    if optimizer_id == "DE":
        return lambda s, p, r: de_step(s, DEFAULT_DE_DESIGN, p, r)
    if optimizer_id == "PSO":
        return pso_step
    if optimizer_id == "SHADE":
        return shade_step
    raise ValueError(f"unknown optimizer {optimizer_id!r}; choose from {OPTIMIZERS}")


def run_baseline(
    optimizer_id: str,
    problem: BasicProblem,
    seed: int,
    *,
    pop_size: int = POP_SIZE,
    log_every: int = 1,
) -> RunRecord:
    """Run ``optimizer_id`` on a fresh problem until the budget is spent."""
    step = _baseline_step(optimizer_id)
    if problem.fes_used != 0:
        raise ValueError("run_baseline needs a fresh problem (fes_used == 0)")
    if problem.n_obj != 1 and optimizer_id in ("PSO", "SHADE"):
        raise ValueError(f"{optimizer_id} supports single-objective problems only")
    rng = np.random.default_rng(seed)
    logger = RunLogger(log_every)
    t0 = time.perf_counter()
    state = init_population(problem, pop_size, rng)
    logger.log(state)
    while problem.remaining >= pop_size:
        try:
            state = step(state, problem, rng)
        except BudgetExhausted:
            break
        logger.log(state)
    logger.finish()
    elapsed = time.perf_counter() - t0
    return RunRecord(
        problem_id=problem.problem_id,
        algorithm=optimizer_id,
        seed=int(seed),
        X=logger.X,
        Y=logger.Y,
        T=elapsed,
        best_curve=logger.best_curve,
        generations=state.generation + 1,
        fes_used=problem.fes_used,
        y0=state.y0,
        final_best=state.best_y,
        final_x=state.best_x,
        log_every=log_every,
    )


def expected_generations(max_fes: int, pop_size: int = POP_SIZE) -> int:
    """Generations a full run records, the initial population included."""
    return math.floor(max_fes / pop_size)

