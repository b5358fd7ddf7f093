"""Meta-level trainers: REINFORCE with a per-problem mean-return baseline, and a
mirrored evolution strategy on the flat parameter vector."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np
from scipy.stats import rankdata

from metabbo.core.policy import MetaPolicy, log_prob_grad
from metabbo.core.signal import NE_FITNESS, RL_TRAJECTORIES, UniversalSignal, wrap_signal
from metabbo.metadata import atomic_write_text
from metabbo.parallel import WorkerPool, _episode_task, _pool_map, rollout_batch
from metabbo.problems import BasicProblem
from metabbo.seeding import hash64, rng_from

log = logging.getLogger(__name__)


@dataclass
class Snapshot:
    epoch: int
    theta: np.ndarray
    hours: float
    train_perf: float | None
    architecture: tuple[int, ...]

    @property
    def seconds(self) -> float:
        return self.hours * 3600.0

    def policy(self) -> MetaPolicy:
        return MetaPolicy(self.theta.copy(), self.architecture)

    def to_dict(self) -> dict[str, Any]:
        return {
            "epoch": int(self.epoch),
            "architecture": list(self.architecture),
            "theta": self.theta.tolist(),
            "cumulative_seconds": self.seconds,
            "train_perf": self.train_perf,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Snapshot":
        missing = {"epoch", "architecture", "theta", "cumulative_seconds"} - set(data)
        if missing:
            raise ValueError(f"snapshot is missing keys {sorted(missing)}")
        return cls(
            int(data["epoch"]),
            np.asarray(data["theta"], dtype=float),
            float(data["cumulative_seconds"]) / 3600.0,
            data.get("train_perf"),
            tuple(int(a) for a in data["architecture"]),
        )

    def save(self, path: str | Path) -> Path:
        return atomic_write_text(path, json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> "Snapshot":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _config_from_dict(cls, data: dict[str, Any]):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**data)


@dataclass
class RLConfig:
    epochs: int = 50
    episodes_per_instance: int = 8
    lr: float = 0.02
    batch_size: int = 16
    max_grad_norm: float = 1.0
    workers: int = 1
    seed: int = 0
    eval_seeds: int = 1

    def __post_init__(self):
        if self.epochs < 0 or self.episodes_per_instance < 1 or self.batch_size < 1:
            raise ValueError("epochs >= 0, episodes_per_instance >= 1 and batch_size >= 1 required")
        if self.lr < 0:
            raise ValueError("learning rate must be non-negative")

    @classmethod
    def from_dict(cls, data):
        return _config_from_dict(cls, data)


@dataclass
class NEConfig:
    generations: int = 50
    popsize: int = 8
    sigma: float = 0.05
    lr: float = 0.05
    seeds_per_instance: int = 1
    workers: int = 1
    seed: int = 0
    eval_seeds: int = 1

    def __post_init__(self):
        if self.popsize < 2 or self.popsize % 2:
            raise ValueError(f"popsize must be even for mirrored sampling, got {self.popsize}")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.generations < 0 or self.seeds_per_instance < 1:
            raise ValueError("generations >= 0 and seeds_per_instance >= 1 required")

    @classmethod
    def from_dict(cls, data):
        return _config_from_dict(cls, data)


class _Clock:
    """Cumulative training hours, strictly increasing across snapshots."""

    def __init__(self):
        self.start = time.perf_counter()
        self.last = 0.0

    def hours(self) -> float:
        h = (time.perf_counter() - self.start) / 3600.0
        if h <= self.last:
            h = math.nextafter(self.last, math.inf)
        self.last = h
        return h


def _greedy_theta_returns(thetas, arch, tasks, pool) -> np.ndarray:
    """Greedy returns for every (theta, task) pair, shape (len(thetas), len(tasks))."""
    items = [(th, arch, p, s, "greedy") for th in thetas for p, s in tasks]
    trajs = _pool_map(pool, _episode_task, items)
    return np.array([t.R for t in trajs]).reshape(len(thetas), len(tasks))


def _snapshot(epoch, theta, arch, train_set, eval_seeds, seed, clock, pool) -> Snapshot:
    perf = None
    if eval_seeds > 0 and train_set:
        tasks = [(p, hash64(seed, 0xE7A1, j)) for p in train_set for j in range(eval_seeds)]
        perf = float(np.mean(_greedy_theta_returns([theta], arch, tasks, pool)))
    return Snapshot(epoch, theta.copy(), clock.hours(), perf, tuple(arch))


# --------------------------------------------------------------------------
# REINFORCE
# --------------------------------------------------------------------------


def reinforce_gradient(policy: MetaPolicy, signal: UniversalSignal) -> np.ndarray:
    """Mean over episodes of ``(R - b) * sum_t grad log pi(a_t | s_t)``.

    ``b`` is the mean return of the episodes on the same problem within the
    batch, and each problem's advantages are scaled by their standard
    deviation: returns on different instances live on very different scales
    (0.8 on Rastrigin vs 1 - 1e-8 on Sphere), and a pooled baseline would
    reward instance identity instead of actions.
    """
    if signal.kind != RL_TRAJECTORIES:
        raise ValueError(f"REINFORCE consumes {RL_TRAJECTORIES} signals, got {signal.kind}")
    trajs = signal.unwrap()
    R = np.array([t.R for t in trajs])
    groups: dict[str, list[int]] = {}
    for k, t in enumerate(trajs):
        groups.setdefault(t.problem_id, []).append(k)
    adv = np.zeros_like(R)
    for members in groups.values():
        a = R[members] - R[members].mean()
        sd = a.std()
        if sd > 1e-12 * max(1.0, float(np.max(np.abs(R[members])))):
            adv[members] = a / sd
    S = np.vstack([t.states for t in trajs])
    A = np.vstack([t.raw_actions for t in trajs])
    K = np.concatenate([t.strategies for t in trajs])
    w = np.concatenate([np.full(t.steps, a) for t, a in zip(trajs, adv)])
    if S.shape[0] == 0:
        return np.zeros_like(policy.theta)
    return log_prob_grad(policy, S, A, K, w) / len(trajs)


def train_rl(
    policy: MetaPolicy,
    train_set: Sequence[BasicProblem],
    config: RLConfig | None = None,
    *,
    on_snapshot: Callable[[Snapshot], None] | None = None,
) -> list[Snapshot]:
    config = config or RLConfig()
    if not train_set:
        raise ValueError("empty train set")
    arch = policy.architecture
    theta = policy.theta.copy()
    clock = _Clock()
    snaps: list[Snapshot] = []
    with WorkerPool(config.workers) as pool:

        def emit(epoch):
            snap = _snapshot(epoch, theta, arch, train_set, config.eval_seeds, config.seed, clock, pool)
            snaps.append(snap)
            if on_snapshot:
                on_snapshot(snap)

        emit(0)
        for g in range(1, config.epochs + 1):
            # episodes of one instance share the optimizer seed and differ only
            # in action sampling, so their return spread reflects the actions
            tasks = [
                (p, hash64(config.seed, g, i), hash64(config.seed, g, i, e))
                for i, p in enumerate(train_set)
                for e in range(config.episodes_per_instance)
            ]
            start_theta = theta.copy()
            for b in range(0, len(tasks), config.batch_size):
                current = MetaPolicy(theta, arch)
                trajs = rollout_batch(current, tasks[b : b + config.batch_size], "sample", pool)
                grad = reinforce_gradient(current, wrap_signal(trajs))
                if not np.all(np.isfinite(grad)):
                    log.warning("epoch %d: non-finite policy gradient, epoch aborted and theta restored", g)
                    theta = start_theta
                    break
                norm = float(np.linalg.norm(grad))
                if config.max_grad_norm and norm > config.max_grad_norm:
                    grad = grad * (config.max_grad_norm / norm)
                theta = theta + config.lr * grad
            emit(g)
    policy.theta = theta.copy()
    return snaps


# --------------------------------------------------------------------------
# evolution strategy
# --------------------------------------------------------------------------


def centered_ranks(fitness) -> np.ndarray:
    """Ranks mapped to [-0.5, 0.5]; tied values share their average rank."""
    f = np.asarray(fitness, dtype=float)
    if f.size < 2:
        return np.zeros_like(f)
    return (rankdata(f, method="average") - 1.0) / (f.size - 1) - 0.5


def mirrored_perturbations(rng: np.random.Generator, popsize: int, n: int) -> np.ndarray:
    """Rows ``+e_0, -e_0, +e_1, -e_1, ...``."""
    if popsize % 2:
        raise ValueError("popsize must be even for mirrored sampling")
    half = rng.standard_normal((popsize // 2, n))
    out = np.empty((popsize, n))
    out[0::2] = half
    out[1::2] = -half
    return out


def es_update(perturbations: np.ndarray, signal: UniversalSignal, sigma: float, lr: float) -> np.ndarray:
    """``lr / (lambda sigma) * sum_k rank_k e_k`` from an ne-fitness signal."""
    if signal.kind != NE_FITNESS:
        raise ValueError(f"ES consumes {NE_FITNESS} signals, got {signal.kind}")
    pairs = sorted(signal.unwrap())
    ids = [k for k, _ in pairs]
    if ids != list(range(perturbations.shape[0])):
        raise ValueError("fitness ids do not match the perturbation rows")
    weights = centered_ranks([f for _, f in pairs])
    lam = perturbations.shape[0]
    return lr / (lam * sigma) * (weights @ perturbations)


def train_ne(
    policy: MetaPolicy,
    train_set: Sequence[BasicProblem],
    config: NEConfig | None = None,
    *,
    on_snapshot: Callable[[Snapshot], None] | None = None,
) -> list[Snapshot]:
    config = config or NEConfig()
    if not train_set:
        raise ValueError("empty train set")
    arch = policy.architecture
    theta = policy.theta.copy()
    clock = _Clock()
    snaps: list[Snapshot] = []
    with WorkerPool(config.workers) as pool:

        def emit(epoch):
            snap = _snapshot(epoch, theta, arch, train_set, config.eval_seeds, config.seed, clock, pool)
            snaps.append(snap)
            if on_snapshot:
                on_snapshot(snap)

        emit(0)
        for g in range(1, config.generations + 1):
            eps = mirrored_perturbations(rng_from(config.seed, g, 0xE5), config.popsize, theta.size)
            seeds = [hash64(config.seed, g, j) for j in range(config.seeds_per_instance)]
            tasks = [(p, s) for p in train_set for s in seeds]
            returns = _greedy_theta_returns([theta + config.sigma * e for e in eps], arch, tasks, pool)
            # rank within each task first so every instance weighs the same,
            # whatever the scale of its returns
            fitness = np.mean([centered_ranks(col) for col in returns.T], axis=0)
            signal = wrap_signal([(k, float(f)) for k, f in enumerate(fitness)])
            step = es_update(eps, signal, config.sigma, config.lr)
            if not np.all(np.isfinite(step)):
                log.warning("generation %d: non-finite ES update skipped", g)
            else:
                theta = theta + step
            emit(g)
    policy.theta = theta.copy()
    return snaps
