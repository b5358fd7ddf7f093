"""Uniform learning-signal container shared by the RL and NE trainers."""

from __future__ import annotations

from dataclasses import dataclass
from numbers import Real
from typing import Any, Sequence

from metabbo.core.env import Trajectory

RL_TRAJECTORIES = "rl-trajectories"
NE_FITNESS = "ne-fitness"


class SignalError(ValueError):
    pass


@dataclass(frozen=True)
class UniversalSignal:
    kind: str
    payload: tuple

    @property
    def count(self) -> int:
        return len(self.payload)

    def unwrap(self) -> list:
        return list(self.payload)


def _is_fitness_pair(item: Any) -> bool:
    return (
        isinstance(item, tuple)
        and len(item) == 2
        and isinstance(item[0], int)
        and isinstance(item[1], Real)
        and not isinstance(item[1], bool)
    )


def wrap_signal(raw: Sequence[Any]) -> UniversalSignal:
    """Tag a batch of trajectories or of (perturbation id, fitness) pairs."""
    items = tuple(raw)
    if not items:
        raise SignalError("cannot wrap an empty payload")
    kinds = {RL_TRAJECTORIES if isinstance(x, Trajectory) else NE_FITNESS if _is_fitness_pair(x) else None
             for x in items}
    if None in kinds:
        raise SignalError("payload items must be Trajectory objects or (int, float) pairs")
    if len(kinds) > 1:
        raise SignalError("mixed payload kinds in one signal")
    return UniversalSignal(kinds.pop(), items)
