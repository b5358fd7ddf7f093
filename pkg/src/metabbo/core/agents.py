"""One train/rollout interface over baselines, fixed designs and meta policies."""

from __future__ import annotations

import logging
from typing import Any, Callable, Sequence

from metabbo.core.env import episode, fixed_design_run
from metabbo.core.policy import MetaPolicy
from metabbo.core.trainers import NEConfig, RLConfig, Snapshot, train_ne, train_rl
from metabbo.optimizers import OPTIMIZERS, POP_SIZE, AlgorithmDesign, RunRecord, run_baseline
from metabbo.problems import BasicProblem

log = logging.getLogger(__name__)

META_KINDS = ("RL", "NE")
AGENT_KINDS = META_KINDS + OPTIMIZERS + ("FIXED-DE",)


class Agent:
    """Base agent. ``train`` returns snapshots; ``rollout`` runs one test run."""

    name = "agent"
    trainable = False

    def train(self, train_set: Sequence[BasicProblem], config: Any = None, *, on_snapshot=None) -> list[Snapshot]:
        log.info("%s has nothing to train; skipping", self.name)
        return []

    def rollout(self, problem: BasicProblem, seed: int, log_every: int = 1) -> RunRecord:
        raise NotImplementedError


class BaselineAgent(Agent):
    def __init__(self, optimizer_id: str, pop_size: int = POP_SIZE):
        if optimizer_id not in OPTIMIZERS:
            raise ValueError(f"unknown baseline {optimizer_id!r}; choose from {OPTIMIZERS}")
        self.optimizer_id = optimizer_id
        self.name = optimizer_id
        self.pop_size = pop_size

    def rollout(self, problem, seed, log_every=1):
        return run_baseline(self.optimizer_id, problem, seed, pop_size=self.pop_size, log_every=log_every)


class FixedDesignAgent(Agent):
    """Configurable DE driven by a constant design (the untrained reference)."""

    def __init__(self, design: AlgorithmDesign | None = None, pop_size: int = POP_SIZE):
        self.design = design or AlgorithmDesign()
        self.name = "FIXED-DE"
        self.pop_size = pop_size

    def rollout(self, problem, seed, log_every=1):
        _, rec = fixed_design_run(self.design, problem, seed, pop_size=self.pop_size, log_every=log_every,
                                  algorithm=self.name)
        return rec


class PolicyAgent(Agent):
    """A meta policy trained by REINFORCE (``RL``) or the ES (``NE``)."""

    trainable = True

    def __init__(self, policy: MetaPolicy, kind: str = "RL", name: str | None = None, pop_size: int = POP_SIZE):
        if kind not in META_KINDS:
            raise ValueError(f"meta agent kind must be one of {META_KINDS}")
        self.policy = policy
        self.kind = kind
        self.name = name or f"MetaDE-{kind}"
        self.pop_size = pop_size

    def train(self, train_set, config=None, *, on_snapshot: Callable[[Snapshot], None] | None = None):
        if self.kind == "RL":
            if isinstance(config, dict):
                config = RLConfig.from_dict(config)
            return train_rl(self.policy, train_set, config, on_snapshot=on_snapshot)
        if isinstance(config, dict):
            config = NEConfig.from_dict(config)
        return train_ne(self.policy, train_set, config, on_snapshot=on_snapshot)

    def rollout(self, problem, seed, log_every=1):
        _, rec = episode(self.policy, problem, seed, "greedy", pop_size=self.pop_size, log_every=log_every,
                         algorithm=self.name)
        return rec


def make_agent(kind: str, policy: MetaPolicy | None = None, **kwargs) -> Agent:
    kind = kind.upper()
    if kind in META_KINDS:
        return PolicyAgent(policy or MetaPolicy.init(kwargs.pop("init_seed", 0)), kind, **kwargs)
    if kind == "FIXED-DE":
        return FixedDesignAgent(**kwargs)
    return BaselineAgent(kind, **kwargs)
