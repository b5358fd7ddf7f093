"""Worker pools, vectorized environments and the four test distribution modes.

Every task is a pure function of (frozen agent, instance, derived seed), so
results never depend on the worker count, the mode or completion order. The
coordinator always re-assembles results in (instance, run) order.

Modes over the instance x run grid:

* Mode 1: instances in batches of ``workers``; a batch must finish before the
  next one starts; runs of one instance are serial on its worker.
* Mode 2: instances one at a time; the K runs of that instance in parallel.
* Mode 3: all instances in parallel; runs of one instance serial.
* Mode 4: the whole flattened grid in parallel.
"""

from __future__ import annotations

import logging
import multiprocessing as mp
import time
import traceback
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from metabbo.core.env import DEEnv, Transition, episode
from metabbo.core.policy import MetaPolicy
from metabbo.metadata import SuiteMetadata, records_to_metadata
from metabbo.optimizers import POP_SIZE, AlgorithmDesign, RunRecord
from metabbo.problems import BasicProblem
from metabbo.seeding import hash64

log = logging.getLogger(__name__)

MODES = (1, 2, 3, 4)


class WorkerPool:
    """``map`` over a process pool, or in-process when ``workers <= 1``."""

    def __init__(self, workers: int = 1):
        if workers < 1:
            raise ValueError("workers must be >= 1")
        self.workers = int(workers)
        self._pool = None

    def __enter__(self) -> "WorkerPool":
        if self.workers > 1 and self._pool is None:
            self._pool = mp.get_context("fork").Pool(self.workers)
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def close(self) -> None:
        if self._pool is not None:
            self._pool.close()
            self._pool.join()
            self._pool = None

    def map(self, fn: Callable, items: Iterable) -> list:
        items = list(items)
        if self._pool is None or len(items) <= 1:
            return [fn(x) for x in items]
        return self._pool.map(fn, items, chunksize=1)


def _pool_map(pool: WorkerPool | None, fn, items) -> list:
    if pool is None:
        return [fn(x) for x in items]
    return pool.map(fn, items)


# --------------------------------------------------------------------------
# vectorized training environments
# --------------------------------------------------------------------------


def _env_step(args) -> tuple[DEEnv, Transition]:
    env, design = args
    return env, env.step(design)


def _env_reset(env: DEEnv) -> tuple[DEEnv, np.ndarray]:
    return env, env.reset()


class VecEnv:
    """B independent DE environments stepped together.

    Each env carries its own problem clone and RNG; with a pool the envs are
    shipped to workers and back every step, which keeps stepping pure.
    """

    def __init__(
        self,
        problems: Sequence[BasicProblem],
        seeds: Sequence[int],
        *,
        pop_size: int = POP_SIZE,
        pool: WorkerPool | None = None,
        log_every: int = 10**9,
    ):
        if len(problems) != len(seeds):
            raise ValueError("need one seed per problem")
        if not problems:
            raise ValueError("VecEnv needs at least one environment")
        self.envs = [DEEnv(p, s, pop_size, log_every) for p, s in zip(problems, seeds)]
        self.pool = pool

    @property
    def batch_size(self) -> int:
        return len(self.envs)

    def reset(self) -> np.ndarray:
        out = _pool_map(self.pool, _env_reset, self.envs)
        self.envs = [e for e, _ in out]
        return np.vstack([s for _, s in out])

    @property
    def dones(self) -> list[bool]:
        return [e.done for e in self.envs]

    def vec_step(self, designs: Sequence[AlgorithmDesign]) -> list[Transition]:
        if len(designs) != self.batch_size:
            raise ValueError(f"expected {self.batch_size} designs, got {len(designs)}")
        if any(self.dones):
            raise RuntimeError("vec_step called with a finished environment")
        out = _pool_map(self.pool, _env_step, list(zip(self.envs, designs)))
        self.envs = [e for e, _ in out]
        return [t for _, t in out]


def vec_step(venv: VecEnv, designs: Sequence[AlgorithmDesign]) -> list[Transition]:
    return venv.vec_step(designs)


def _episode_task(args):
    theta, arch, problem, seed, mode, *rest = args
    policy_seed = rest[0] if rest else None
    traj, _ = episode(MetaPolicy(theta, arch), problem, seed, mode, log_every=10**9, policy_seed=policy_seed)
    return traj


def rollout_batch(policy: MetaPolicy, tasks: Sequence[tuple], mode: str, pool=None) -> list:
    """Whole episodes for a batch of (problem, seed[, policy_seed]) tasks under a frozen policy.

    This is the episode-granular form of stepping a VecEnv: the policy is
    immutable within the batch, so each env can be driven to completion on
    its own worker. Results are in task order.
    """
    items = [(policy.theta, policy.architecture, t[0], t[1], mode, *t[2:]) for t in tasks]
    return _pool_map(pool, _episode_task, items)


def episode_returns(policy: MetaPolicy, tasks, mode: str = "greedy", pool=None) -> list[float]:
    return [t.R for t in rollout_batch(policy, tasks, mode, pool)]


# --------------------------------------------------------------------------
# test plans
# --------------------------------------------------------------------------


class TaskFailure(RuntimeError):
    def __init__(self, failures: list[tuple[int, int, str]]):
        self.failures = failures
        names = ", ".join(f"(instance {i}, run {k})" for i, k, _ in failures)
        super().__init__(f"{len(failures)} task(s) failed after retry: {names}")


@dataclass
class TestPlan:
    mode: int
    instances: list[BasicProblem]
    runs: int = 51
    base_seed: int = 2025
    workers: int = 1
    log_every: int = 1

    __test__ = False  # not a pytest class

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode}")
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if not self.instances:
            raise ValueError("test plan has no instances")
        ids = [p.problem_id for p in self.instances]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate instance ids in test plan")

    @property
    def n_tasks(self) -> int:
        return len(self.instances) * self.runs

    def seed(self, i: int, k: int) -> int:
        return hash64(self.base_seed, i, k)

    def seeds(self) -> dict[tuple[int, int], int]:
        out = {(i, k): self.seed(i, k) for i in range(len(self.instances)) for k in range(self.runs)}
        if len(set(out.values())) != len(out):
            raise RuntimeError("derived seed collision in test plan")
        return out


@dataclass
class TestResult:
    problem_type: str
    instance_ids: list[str]
    runs: int
    records: dict[tuple[int, int], RunRecord]
    wall_seconds: float = 0.0
    retried: list[tuple[int, int]] = field(default_factory=list)

    __test__ = False

    @property
    def n_records(self) -> int:
        return len(self.records)

    def ordered(self) -> list[RunRecord]:
        return [self.records[(i, k)] for i in range(len(self.instance_ids)) for k in range(self.runs)]

    def metadata(self) -> SuiteMetadata:
        grouped = [
            (pid, [self.records[(i, k)] for k in range(self.runs)]) for i, pid in enumerate(self.instance_ids)
        ]
        return records_to_metadata(self.problem_type, grouped)

    @property
    def throughput(self) -> float:
        return self.n_records / self.wall_seconds if self.wall_seconds > 0 else float("inf")


def _run_one(agent, problem: BasicProblem, seed: int, log_every: int) -> RunRecord:
    return agent.rollout(problem.fresh(seed), seed, log_every=log_every)


def _run_task(args):
    agent, problem, i, k, seed, log_every = args
    try:
        return [(i, k, True, _run_one(agent, problem, seed, log_every))]
    except Exception:
        return [(i, k, False, traceback.format_exc())]


def _instance_task(args):
    agent, problem, i, seeds, log_every = args
    out = []
    for k, seed in enumerate(seeds):
        out.extend(_run_task((agent, problem, i, k, seed, log_every)))
    return out


def _problem_type(problems: Sequence[BasicProblem]) -> str:
    if all(p.n_obj == 2 for p in problems):
        return "MOO"
    if any(getattr(p, "noise_sigma", 0.0) > 0 for p in problems):
        return "SOO-noisy"
    return "SOO"


def run_test_plan(agent, plan: TestPlan, problem_type: str | None = None) -> TestResult:
    """Execute ``plan`` and collect exactly |instances| * runs records."""
    seeds = plan.seeds()
    insts = plan.instances
    K = plan.runs
    W = plan.workers
    t0 = time.perf_counter()
    results: list[tuple[int, int, bool, Any]] = []
    with WorkerPool(W) as pool:
        if plan.mode == 1:
            for start in range(0, len(insts), W):
                batch = [
                    (agent, insts[i], i, [seeds[(i, k)] for k in range(K)], plan.log_every)
                    for i in range(start, min(start + W, len(insts)))
                ]
                for chunk in pool.map(_instance_task, batch):
                    results.extend(chunk)
        elif plan.mode == 2:
            for i in range(len(insts)):
                tasks = [(agent, insts[i], i, k, seeds[(i, k)], plan.log_every) for k in range(K)]
                for chunk in pool.map(_run_task, tasks):
                    results.extend(chunk)
        elif plan.mode == 3:
            tasks = [(agent, insts[i], i, [seeds[(i, k)] for k in range(K)], plan.log_every) for i in range(len(insts))]
            for chunk in pool.map(_instance_task, tasks):
                results.extend(chunk)
        else:
            tasks = [
                (agent, insts[i], i, k, seeds[(i, k)], plan.log_every) for i in range(len(insts)) for k in range(K)
            ]
            for chunk in pool.map(_run_task, tasks):
                results.extend(chunk)

        records: dict[tuple[int, int], RunRecord] = {}
        failed = []
        for i, k, ok, payload in results:
            if ok:
                records[(i, k)] = payload
            else:
                log.warning("task (instance %d, run %d) failed, retrying once:\n%s", i, k, payload)
                failed.append((i, k))
        retry = [(agent, insts[i], i, k, seeds[(i, k)], plan.log_every) for i, k in failed]
        final_failures = []
        for chunk in pool.map(_run_task, retry):
            for i, k, ok, payload in chunk:
                if ok:
                    records[(i, k)] = payload
                else:
                    final_failures.append((i, k, payload))
    if final_failures:
        raise TaskFailure(final_failures)
    elapsed = time.perf_counter() - t0
    return TestResult(
        problem_type or _problem_type(insts),
        [p.problem_id for p in insts],
        K,
        records,
        wall_seconds=elapsed,
        retried=failed,
    )
