"""Feed-forward meta policy with a hand-written backward pass.

Output head of the ``[9, 32, 32, 5]`` network: units 0/1 are the raw F and
CR (squashed by a sigmoid), units 2..4 are strategy logits. In sample mode
the raw F/CR get Gaussian noise before the sigmoid, so log-probabilities are
densities over the pre-sigmoid actions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from metabbo.optimizers import AlgorithmDesign, STRATEGIES

ARCHITECTURE = (9, 32, 32, 5)
ACTION_SIGMA = 0.1
_LOG_NORM = -math.log(ACTION_SIGMA) - 0.5 * math.log(2.0 * math.pi)


def n_params(arch=ARCHITECTURE) -> int:
    return sum(a * b + b for a, b in zip(arch[:-1], arch[1:]))


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - np.max(z, axis=-1, keepdims=True)
    return z - np.log(np.sum(np.exp(z), axis=-1, keepdims=True))


class ArchitectureMismatch(ValueError):
    pass


@dataclass
class MetaPolicy:
    theta: np.ndarray
    architecture: tuple[int, ...] = ARCHITECTURE

    def __post_init__(self):
        self.architecture = tuple(int(a) for a in self.architecture)
        if self.architecture[-1] != 2 + len(STRATEGIES):
            raise ArchitectureMismatch(f"output layer must have {2 + len(STRATEGIES)} units")
        self.theta = np.asarray(self.theta, dtype=float).ravel()
        if self.theta.size != n_params(self.architecture):
            raise ArchitectureMismatch(
                f"theta has {self.theta.size} entries, architecture {list(self.architecture)} "
                f"needs {n_params(self.architecture)}"
            )

    @classmethod
    def zeros(cls, arch=ARCHITECTURE) -> "MetaPolicy":
        return cls(np.zeros(n_params(arch)), tuple(arch))

    @classmethod
    def init(cls, seed: int, arch=ARCHITECTURE, out_scale: float = 0.1, out_bias=None) -> "MetaPolicy":
        """Glorot-uniform hidden layers, a shrunken output layer, zero biases.

        ``out_bias`` optionally sets the output-layer bias, e.g. from
        ``design_bias`` to start the policy next to a known design.
        """
        rng = np.random.default_rng(seed)
        parts = []
        last = len(arch) - 2
        for k, (a, b) in enumerate(zip(arch[:-1], arch[1:])):
            lim = math.sqrt(6.0 / (a + b)) * (out_scale if k == last else 1.0)
            parts.append(rng.uniform(-lim, lim, size=a * b))
            bias = np.zeros(b)
            if k == last and out_bias is not None:
                bias[:] = out_bias
            parts.append(bias)
        return cls(np.concatenate(parts), tuple(arch))

    def copy(self) -> "MetaPolicy":
        return MetaPolicy(self.theta.copy(), self.architecture)

    def with_theta(self, theta) -> "MetaPolicy":
        return MetaPolicy(theta, self.architecture)

    def layers(self, theta=None):
        theta = self.theta if theta is None else theta
        out, pos = [], 0
        for a, b in zip(self.architecture[:-1], self.architecture[1:]):
            W = theta[pos : pos + a * b].reshape(a, b)
            pos += a * b
            out.append((W, theta[pos : pos + b]))
            pos += b
        return out

    def forward(self, S: np.ndarray):
        """Raw outputs for a batch of feature rows, plus hidden activations."""
        H = [np.atleast_2d(np.asarray(S, dtype=float))]
        layers = self.layers()
        for W, b in layers[:-1]:
            H.append(np.tanh(H[-1] @ W + b))
        W, b = layers[-1]
        return H[-1] @ W + b, H

    def to_dict(self) -> dict:
        return {"architecture": list(self.architecture), "theta": self.theta.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "MetaPolicy":
        return cls(np.asarray(data["theta"], dtype=float), tuple(data["architecture"]))


@dataclass(frozen=True)
class Action:
    design: AlgorithmDesign
    log_prob: float
    raw: tuple[float, float]
    strategy: int


def design_bias(design: AlgorithmDesign, margin: float = 3.0) -> np.ndarray:
    """Output bias whose greedy action is ``design`` (F, CR pre-sigmoid; the
    chosen strategy's logit raised by ``margin``).

    A margin of 3 makes the sampled strategy match the greedy one about 91% of
    the time, so early REINFORCE returns mostly reflect the F and CR noise.
    """
    def logit(p):
        p = min(max(p, 1e-6), 1.0 - 1e-6)
        return math.log(p / (1.0 - p))

    out = np.zeros(2 + len(STRATEGIES))
    out[0], out[1] = logit(design.F), logit(design.CR)
    out[2 + design.strategy] = margin
    return out


def act(policy: MetaPolicy, s, mode: str, rng: np.random.Generator | None = None) -> Action:
    out, _ = policy.forward(s)
    o = out[0]
    logits = o[2:]
    logsm = _log_softmax(logits)
    if mode == "greedy":
        raw = (float(o[0]), float(o[1]))
        strategy = int(np.argmax(logits))
    elif mode == "sample":
        if rng is None:
            raise ValueError("sample mode needs an rng")
        noise = rng.standard_normal(2)
        raw = (float(o[0] + ACTION_SIGMA * noise[0]), float(o[1] + ACTION_SIGMA * noise[1]))
        p = np.exp(logsm)
        strategy = int(min(np.searchsorted(np.cumsum(p), rng.random() * p.sum(), side="right"), len(p) - 1))
    else:
        raise ValueError(f"mode must be 'greedy' or 'sample', got {mode!r}")
    logp = (
        2 * _LOG_NORM
        - 0.5 * ((raw[0] - o[0]) / ACTION_SIGMA) ** 2
        - 0.5 * ((raw[1] - o[1]) / ACTION_SIGMA) ** 2
        + logsm[strategy]
    )
    design = AlgorithmDesign(float(_sigmoid(raw[0])), float(_sigmoid(raw[1])), strategy)
    return Action(design, float(logp), raw, strategy)


def policy_forward(policy: MetaPolicy, s, mode: str = "greedy", rng=None) -> tuple[AlgorithmDesign, float]:
    a = act(policy, s, mode, rng)
    return a.design, a.log_prob


def log_prob(policy: MetaPolicy, S, raw, strategies) -> np.ndarray:
    """Per-row log-density of recorded actions."""
    out, _ = policy.forward(S)
    raw = np.atleast_2d(np.asarray(raw, dtype=float))
    strategies = np.asarray(strategies, dtype=int)
    z = (raw - out[:, :2]) / ACTION_SIGMA
    logsm = _log_softmax(out[:, 2:])
    return 2 * _LOG_NORM - 0.5 * np.sum(z * z, axis=1) + logsm[np.arange(len(strategies)), strategies]


def log_prob_grad(policy: MetaPolicy, S, raw, strategies, weights=None) -> np.ndarray:
    """``sum_t w_t * d log pi(a_t | s_t) / d theta`` via backpropagation."""
    out, H = policy.forward(S)
    m = out.shape[0]
    raw = np.atleast_2d(np.asarray(raw, dtype=float))
    strategies = np.asarray(strategies, dtype=int)
    w = np.ones(m) if weights is None else np.asarray(weights, dtype=float)

    delta = np.empty_like(out)
    delta[:, :2] = (raw - out[:, :2]) / ACTION_SIGMA**2
    probs = np.exp(_log_softmax(out[:, 2:]))
    onehot = np.zeros_like(probs)
    onehot[np.arange(m), strategies] = 1.0
    delta[:, 2:] = onehot - probs
    delta *= w[:, None]

    layers = policy.layers()
    grads = []
    for k in range(len(layers) - 1, -1, -1):
        W, _ = layers[k]
        grads.append((H[k].T @ delta).ravel())
        grads.append(delta.sum(axis=0))
        if k > 0:
            delta = (delta @ W.T) * (1.0 - H[k] ** 2)
    # grads were collected output-layer first as (W, b) pairs
    ordered = []
    for k in range(len(layers)):
        gW, gb = grads[2 * (len(layers) - 1 - k)], grads[2 * (len(layers) - 1 - k) + 1]
        ordered.extend([gW, gb])
    return np.concatenate(ordered)
