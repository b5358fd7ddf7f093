"""Low-level optimization environment: one configurable-DE run as an MDP."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from metabbo.core.features import extract_features, reward
from metabbo.core.policy import MetaPolicy, act
from metabbo.optimizers import (
    POP_SIZE,
    AlgorithmDesign,
    OptimizerState,
    RunLogger,
    RunRecord,
    de_step,
    init_population,
    run_baseline,
)
from metabbo.problems import BasicProblem
from metabbo.seeding import hash64

_OPT_STREAM, _POLICY_STREAM, _REF_STREAM = 1, 2, 3


@dataclass
class Transition:
    state: np.ndarray
    reward: float
    done: bool


def reference_optimum(problem: BasicProblem, seed: int, pop_size: int = POP_SIZE) -> float:
    """Stand-in optimum for problems without a known ``f_opt``: the best value a
    random search finds on a clone with the same budget."""
    rec = run_baseline("RS", problem.fresh(hash64(seed, _REF_STREAM)), hash64(seed, _REF_STREAM), pop_size=pop_size)
    return float(rec.final_best)


class DEEnv:
    """Configurable DE on one problem; each ``step`` runs one generation.

    Owns a fresh clone of the problem, so envs never share FE counters or
    noise streams.
    """

    def __init__(self, problem: BasicProblem, seed: int, pop_size: int = POP_SIZE, log_every: int = 1):
        if problem.n_obj != 1:
            raise ValueError("meta-policy environments need single-objective problems")
        self.problem = problem.fresh(seed)
        self.seed = int(seed)
        self.pop_size = pop_size
        self.rng = np.random.default_rng(hash64(seed, _OPT_STREAM))
        self.T = max(self.problem.max_fes // pop_size - 1, 0)
        self.f_opt = self.problem.f_opt
        if self.f_opt is None:
            self.f_opt = reference_optimum(problem, seed, pop_size)
        self.logger = RunLogger(log_every)
        self.state: OptimizerState | None = None
        self.t = 0
        self.done = False
        self._t0 = 0.0
        self._elapsed = 0.0

    def reset(self) -> np.ndarray:
        self._t0 = time.perf_counter()
        self.state = init_population(self.problem, self.pop_size, self.rng)
        self.logger.log(self.state)
        self.t = 0
        self.done = self.problem.remaining < self.pop_size
        self._elapsed += time.perf_counter() - self._t0
        return self.features()

    def features(self) -> np.ndarray:
        return extract_features(self.state, self.problem, self.t, self.T, self.f_opt)

    def step(self, design: AlgorithmDesign) -> Transition:
        if self.state is None:
            raise RuntimeError("call reset() first")
        if self.done:
            raise RuntimeError("environment is done")
        t0 = time.perf_counter()
        prev = self.state.best_y
        self.state = de_step(self.state, design, self.problem, self.rng)
        self.logger.log(self.state)
        self.t += 1
        r = reward(prev, self.state.best_y, self.state.y0, self.f_opt)
        self.done = self.problem.remaining < self.pop_size
        s = self.features()
        self._elapsed += time.perf_counter() - t0
        return Transition(s, r, self.done)

    def run_record(self, algorithm: str) -> RunRecord:
        self.logger.finish()
        st = self.state
        return RunRecord(
            problem_id=self.problem.problem_id,
            algorithm=algorithm,
            seed=self.seed,
            X=self.logger.X,
            Y=self.logger.Y,
            T=self._elapsed,
            best_curve=self.logger.best_curve,
            generations=st.generation + 1,
            fes_used=self.problem.fes_used,
            y0=st.y0,
            final_best=st.best_y,
            final_x=st.best_x,
            log_every=self.logger.log_every,
        )


@dataclass
class Trajectory:
    problem_id: str
    seed: int
    states: np.ndarray
    raw_actions: np.ndarray
    strategies: np.ndarray
    rewards: np.ndarray
    log_probs: np.ndarray
    y0: float = 0.0
    final_best: float = 0.0
    f_opt: float = 0.0
    designs: list[AlgorithmDesign] = field(default_factory=list)

    @property
    def steps(self) -> int:
        return int(self.rewards.shape[0])

    @property
    def R(self) -> float:
        return float(np.sum(self.rewards))


def policy_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(hash64(seed, _POLICY_STREAM))


def episode(
    policy: MetaPolicy,
    problem: BasicProblem,
    seed: int,
    mode: str = "greedy",
    *,
    pop_size: int = POP_SIZE,
    log_every: int = 1,
    algorithm: str = "policy",
    policy_seed: int | None = None,
) -> tuple[Trajectory, RunRecord]:
    """One full episode. ``policy_seed`` (default ``seed``) keys the action
    sampling stream separately from the optimizer stream, so sampled episodes
    can share optimizer randomness while exploring different actions."""
    env = DEEnv(problem, seed, pop_size, log_every)
    prng = policy_rng(seed if policy_seed is None else policy_seed)
    s = env.reset()
    S, A, K, Rw, LP, D = [], [], [], [], [], []
    while not env.done:
        a = act(policy, s, mode, prng)
        tr = env.step(a.design)
        S.append(s)
        A.append(a.raw)
        K.append(a.strategy)
        Rw.append(tr.reward)
        LP.append(a.log_prob)
        D.append(a.design)
        s = tr.state
    dim = policy.architecture[0]
    traj = Trajectory(
        problem_id=problem.problem_id,
        seed=int(seed),
        states=np.asarray(S, dtype=float).reshape(-1, dim),
        raw_actions=np.asarray(A, dtype=float).reshape(-1, 2),
        strategies=np.asarray(K, dtype=int),
        rewards=np.asarray(Rw, dtype=float),
        log_probs=np.asarray(LP, dtype=float),
        y0=env.state.y0,
        final_best=env.state.best_y,
        f_opt=env.f_opt,
        designs=D,
    )
    return traj, env.run_record(algorithm)


def fixed_design_run(
    design: AlgorithmDesign,
    problem: BasicProblem,
    seed: int,
    *,
    pop_size: int = POP_SIZE,
    log_every: int = 1,
    algorithm: str = "fixed-DE",
) -> tuple[float, RunRecord]:
    """Configurable DE under a constant design; returns (episode return, record).

    Uses the same env and RNG streams as :func:`episode`, so it is the exact
    counterpart of a policy that always outputs ``design``.
    """
    env = DEEnv(problem, seed, pop_size, log_every)
    env.reset()
    total = 0.0
    while not env.done:
        total += env.step(design).reward
    return total, env.run_record(algorithm)


def meta_objective(policy: MetaPolicy, problems: Sequence[BasicProblem], seeds: Sequence[int], pool=None) -> float:
    """Mean greedy-episode return over the (problem x seed) grid."""
    if not problems:
        raise ValueError("meta_objective needs at least one problem")
    from metabbo.parallel import episode_returns

    returns = episode_returns(policy, [(p, s) for p in problems for s in seeds], "greedy", pool=pool)
    return float(np.mean(returns))
