"""Problem abstraction, synthetic instance generators and suites.

Every problem owns its FE counter and noise stream. Parallel runs never share
a problem object: they call :meth:`BasicProblem.fresh` to obtain a clone with
a zeroed counter and a noise stream derived from the run seed.
"""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field, fields
from typing import Any

import numpy as np

from metabbo import kernels
from metabbo.seeding import hash64, rng_from

FAMILIES = (
    "sphere",
    "ellipsoid",
    "rastrigin",
    "rosenbrock",
    "schwefel",
    "ackley",
    "griewank",
    "different_powers",
    "sharp_ridge",
    "katsuura",
)
ZDT_VARIANTS = ("ZDT1", "ZDT2", "ZDT3")
# lower-left corner of each ZDT front's bounding box
ZDT_IDEAL = {"ZDT1": (0.0, 0.0), "ZDT2": (0.0, 0.0), "ZDT3": (0.0, -0.7733534)}

SOO_BOUNDS = (-5.0, 5.0)
DEFAULT_NOISY_SIGMA = 0.01


class BudgetExhausted(RuntimeError):
    """Raised when an evaluation request does not fit in the remaining budget."""

    def __init__(self, requested: int, remaining: int):
        super().__init__(f"budget exhausted: requested {requested} FEs, {remaining} remaining")
        self.requested = requested
        self.remaining = remaining


def family_index(family: str | int) -> int:
    if isinstance(family, (int, np.integer)):
        if not 0 <= int(family) < len(FAMILIES):
            raise ValueError(f"unknown family index {family}")
        return int(family)
    key = str(family).strip().lower().replace("-", "_")
    if key not in FAMILIES:
        raise ValueError(f"unknown family {family!r}; choose from {', '.join(FAMILIES)}")
    return FAMILIES.index(key)


class BasicProblem:
    """Polymorphic parent of every evaluable problem.

    Subclasses implement ``_objective(X) -> (n,) or (n, n_obj)`` on clipped,
    in-bounds rows; this class does budget accounting and clipping.
    """

    n_obj = 1

    def __init__(self, problem_id: str, dim: int, lb, ub, max_fes: int):
        if dim < 1:
            raise ValueError(f"dim must be positive, got {dim}")
        if max_fes < 1:
            raise ValueError(f"max_fes must be positive, got {max_fes}")
        self.problem_id = problem_id
        self.dim = int(dim)
        self.lb = np.broadcast_to(np.asarray(lb, dtype=float), (self.dim,)).copy()
        self.ub = np.broadcast_to(np.asarray(ub, dtype=float), (self.dim,)).copy()
        self.max_fes = int(max_fes)
        self.fes_used = 0

    @property
    def remaining(self) -> int:
        return self.max_fes - self.fes_used

    @property
    def f_opt(self) -> float | None:
        return None

    def _objective(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def eval(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.dim:
            raise ValueError(f"expected rows of length {self.dim}, got shape {X.shape}")
        n = X.shape[0]
        if self.fes_used + n > self.max_fes:
            raise BudgetExhausted(n, self.remaining)
        X = np.clip(X, self.lb, self.ub)
        out = self._objective(X)
        self.fes_used += n
        return out

    def fresh(self, run_seed: int = 0) -> "BasicProblem":
        """Clone with ``fes_used = 0`` and a noise stream keyed by ``run_seed``."""
        clone = copy.deepcopy(self)
        clone.fes_used = 0
        clone._reseed(run_seed)
        return clone

    def _reseed(self, run_seed: int) -> None:
        pass

    def describe(self) -> dict[str, Any]:
        return {"problem_id": self.problem_id, "dim": self.dim, "max_fes": self.max_fes}


class ProblemInstance(BasicProblem):
    """Shift-then-rotate single-objective instance ``f(R (x - o)) + f_opt``."""

    def __init__(
        self,
        problem_id: str,
        family: str | int,
        dim: int,
        shift,
        rotation,
        *,
        max_fes: int = 20000,
        noise_sigma: float = 0.0,
        instance_seed: int = 0,
        f_opt: float = 0.0,
        bounds: tuple[float, float] = SOO_BOUNDS,
    ):
        super().__init__(problem_id, dim, bounds[0], bounds[1], max_fes)
        if noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        self.family_id = family_index(family)
        self.shift = np.asarray(shift, dtype=float).reshape(self.dim)
        self.rotation = np.asarray(rotation, dtype=float).reshape(self.dim, self.dim)
        self.noise_sigma = float(noise_sigma)
        self.instance_seed = int(instance_seed)
        self._f_opt = float(f_opt)
        self._reseed(0)

    @property
    def family(self) -> str:
        return FAMILIES[self.family_id]

    @property
    def f_opt(self) -> float:
        return self._f_opt

    @property
    def x_opt(self) -> np.ndarray:
        return self.shift.copy()

    def _reseed(self, run_seed: int) -> None:
        self._noise = rng_from(self.instance_seed, run_seed, 0x6E6F697365)

    def noiseless(self, X) -> np.ndarray:
        """Objective without noise and without touching the budget."""
        Z = (np.atleast_2d(np.asarray(X, dtype=float)) - self.shift) @ self.rotation.T
        return kernels.eval_family(self.family_id, np.ascontiguousarray(Z)) + self._f_opt

    def _objective(self, X: np.ndarray) -> np.ndarray:
        y = self.noiseless(X)
        if self.noise_sigma > 0:
            g = self._noise.standard_normal(y.shape[0])
            g2 = self._noise.standard_normal(y.shape[0])
            y = y * (1.0 + self.noise_sigma * g) + self.noise_sigma * g2
        return y

    def describe(self) -> dict[str, Any]:
        out = super().describe()
        out.update(family=self.family, noise_sigma=self.noise_sigma, instance_seed=self.instance_seed)
        return out


class MooInstance(BasicProblem):
    """Bi-objective ZDT instance on the unit box."""

    n_obj = 2

    def __init__(
        self,
        problem_id: str,
        variant: str,
        dim: int = 30,
        *,
        max_fes: int = 5000,
        reference_point: tuple[float, float] = (1.1, 1.1),
    ):
        super().__init__(problem_id, dim, 0.0, 1.0, max_fes)
        variant = variant.upper()
        if variant not in ZDT_VARIANTS:
            raise ValueError(f"unknown ZDT variant {variant!r}")
        self.variant = variant
        self.reference_point = (float(reference_point[0]), float(reference_point[1]))

    @property
    def ideal_point(self) -> tuple[float, float]:
        return ZDT_IDEAL[self.variant]

    def _objective(self, X: np.ndarray) -> np.ndarray:
        f1 = X[:, 0]
        if self.dim > 1:
            g = 1.0 + 9.0 * np.sum(X[:, 1:], axis=1) / (self.dim - 1)
        else:
            g = np.ones(X.shape[0])
        ratio = f1 / g
        if self.variant == "ZDT1":
            f2 = g * (1.0 - np.sqrt(ratio))
        elif self.variant == "ZDT2":
            f2 = g * (1.0 - ratio**2)
        else:
            f2 = g * (1.0 - np.sqrt(ratio) - ratio * np.sin(10.0 * np.pi * f1))
        return np.column_stack([f1, f2])

    def describe(self) -> dict[str, Any]:
        out = super().describe()
        out.update(variant=self.variant, reference_point=list(self.reference_point))
        return out


def evaluate(problem: BasicProblem, X) -> np.ndarray:
    return problem.eval(X)


def evaluate_moo(problem: MooInstance, X) -> np.ndarray:
    if problem.n_obj != 2:
        raise TypeError("evaluate_moo expects a bi-objective problem")
    return problem.eval(X)


def random_rotation(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed orthogonal matrix (QR with the sign of diag(R) fixed)."""
    A = rng.standard_normal((dim, dim))
    Q, R = np.linalg.qr(A)
    return Q * np.where(np.diag(R) < 0, -1.0, 1.0)


def make_soo_instance(
    family: str | int,
    dim: int,
    seed: int,
    noise_sigma: float = 0.0,
    *,
    max_fes: int = 20000,
    problem_id: str | None = None,
    shift=None,
    rotation=None,
) -> ProblemInstance:
    """Seeded instance; ``shift`` / ``rotation`` override the sampled transform."""
    fid = family_index(family)
    if dim < 1:
        raise ValueError(f"dim must be positive, got {dim}")
    rng = rng_from(seed, 0x736F6F)
    lo, hi = SOO_BOUNDS
    margin = 0.1 * (hi - lo)
    o = rng.uniform(lo + margin, hi - margin, size=dim)
    R = random_rotation(dim, rng)
    if shift is not None:
        o = np.asarray(shift, dtype=float)
    if rotation is not None:
        R = np.asarray(rotation, dtype=float)
    return ProblemInstance(
        problem_id or f"{FAMILIES[fid]}-d{dim}-s{seed}",
        fid,
        dim,
        o,
        R,
        max_fes=max_fes,
        noise_sigma=noise_sigma,
        instance_seed=seed,
    )


# --------------------------------------------------------------------------
# suites
# --------------------------------------------------------------------------

SUITE_KINDS: dict[str, dict[str, Any]] = {
    "soo-10d": {"problem_type": "SOO", "dim": 10, "max_fes": 20000, "noise_sigma": 0.0, "train": 8, "test": 16},
    "soo-30d": {"problem_type": "SOO", "dim": 30, "max_fes": 50000, "noise_sigma": 0.0, "train": 8, "test": 16},
    "soo-noisy-10d": {"problem_type": "SOO-noisy", "dim": 10, "max_fes": 20000,
                      "noise_sigma": DEFAULT_NOISY_SIGMA, "train": 8, "test": 16},
    "soo-noisy-30d": {"problem_type": "SOO-noisy", "dim": 30, "max_fes": 50000,
                      "noise_sigma": DEFAULT_NOISY_SIGMA, "train": 8, "test": 16},
    "zdt": {"problem_type": "MOO", "dim": 30, "max_fes": 5000, "noise_sigma": 0.0, "train": 1, "test": 2},
}


@dataclass
class SuiteSpec:
    suite: str = "soo-10d"
    dim: int | None = None
    max_fes: int | None = None
    seed: int = 42
    train: int | None = None
    test: int | None = None
    noise_sigma: float | None = None
    families: list[str] | None = None
    instances: int | None = None

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SuiteSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown suite keys: {sorted(unknown)}")
        return cls(**data)

    def resolved(self) -> "SuiteSpec":
        """Copy with kind defaults filled in and everything validated."""
        if self.suite not in SUITE_KINDS:
            raise ValueError(f"unknown suite {self.suite!r}; choose from {sorted(SUITE_KINDS)}")
        base = SUITE_KINDS[self.suite]
        out = SuiteSpec(**asdict(self))
        for key in ("dim", "max_fes", "noise_sigma", "train", "test"):
            if getattr(out, key) is None:
                setattr(out, key, base[key])
        if base["problem_type"] == "MOO":
            if out.families is not None:
                raise ValueError("families does not apply to the zdt suite")
        elif out.families is not None:
            out.families = [FAMILIES[family_index(f)] for f in out.families]
            if not out.families:
                raise ValueError("families must be non-empty")
        if out.dim < 1:
            raise ValueError("dim must be positive")
        if out.max_fes < 1:
            raise ValueError("max_fes must be positive")
        if out.train < 0 or out.test < 0:
            raise ValueError("split sizes must be non-negative")
        if out.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        total = out.train + out.test
        if out.instances is None:
            out.instances = total
        if total > out.instances:
            raise ValueError(f"split {out.train}+{out.test} exceeds instance count {out.instances}")
        if total < out.instances:
            raise ValueError(f"split {out.train}+{out.test} does not cover {out.instances} instances")
        if out.instances < 1:
            raise ValueError("suite needs at least one instance")
        return out

    def to_dict(self) -> dict[str, Any]:
        return {k: v for k, v in asdict(self).items() if v is not None}


@dataclass
class Suite:
    name: str
    problem_type: str
    instances: list[BasicProblem]
    train_ids: list[str]
    test_ids: list[str]
    spec: SuiteSpec = field(default_factory=SuiteSpec)
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self):
        ids = [p.problem_id for p in self.instances]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate problem ids in suite")
        if set(self.train_ids) & set(self.test_ids):
            raise ValueError("train and test ids overlap")
        if set(self.train_ids) | set(self.test_ids) != set(ids):
            raise ValueError("split does not cover every instance")

    @property
    def empty_test(self) -> bool:
        return not self.test_ids

    def get(self, problem_id: str) -> BasicProblem:
        for p in self.instances:
            if p.problem_id == problem_id:
                return p
        raise KeyError(problem_id)

    def train_set(self) -> list[BasicProblem]:
        return [self.get(i) for i in self.train_ids]

    def test_set(self) -> list[BasicProblem]:
        return [self.get(i) for i in self.test_ids]

    def subset(self, split: str) -> list[BasicProblem]:
        if split == "train":
            return self.train_set()
        if split == "test":
            return self.test_set()
        if split == "all":
            return list(self.instances)
        raise ValueError(f"unknown split {split!r}")


def build_suite(config: SuiteSpec | dict[str, Any] | None = None) -> Suite:
    """Build a seeded suite; the instance order and split depend on the seed only."""
    if config is None:
        spec = SuiteSpec()
    elif isinstance(config, SuiteSpec):
        spec = config
    else:
        spec = SuiteSpec.from_dict(config)
    spec = spec.resolved()
    kind = SUITE_KINDS[spec.suite]
    instances: list[BasicProblem] = []
    for idx in range(spec.instances):
        if kind["problem_type"] == "MOO":
            variant = ZDT_VARIANTS[idx % len(ZDT_VARIANTS)]
            instances.append(
                MooInstance(f"{spec.suite}/{idx:02d}-{variant}", variant, spec.dim, max_fes=spec.max_fes)
            )
            continue
        families = spec.families or list(FAMILIES)
        family = families[idx % len(families)]
        inst_seed = hash64(spec.seed, idx)
        instances.append(
            make_soo_instance(
                family,
                spec.dim,
                inst_seed,
                spec.noise_sigma,
                max_fes=spec.max_fes,
                problem_id=f"{spec.suite}/{idx:02d}-{family}",
            )
        )
    perm = rng_from(spec.seed, 0x73706C6974).permutation(spec.instances)
    train_idx = sorted(perm[: spec.train].tolist())
    test_idx = sorted(perm[spec.train :].tolist())
    warnings = []
    if not test_idx:
        warnings.append("empty test split")
    return Suite(
        name=spec.suite,
        problem_type=kind["problem_type"],
        instances=instances,
        train_ids=[instances[i].problem_id for i in train_idx],
        test_ids=[instances[i].problem_id for i in test_idx],
        spec=spec,
        warnings=warnings,
    )

