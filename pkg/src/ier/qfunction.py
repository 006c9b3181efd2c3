"""Linear action-value function over one-hot states.

With a one-hot input the dense layer reduces to a row lookup, so
``Q(s, .) = weights[s] + bias``. Gradients of the mean squared TD error are
therefore sparse: only rows of visited states and bias entries of taken
actions receive a non-zero gradient.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np


class NumericalError(FloatingPointError):
    """A loss or parameter became NaN or infinite."""


class Batch(NamedTuple):
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s_next: np.ndarray
    terminal: np.ndarray

    def __len__(self):
        return len(self.s)

    @classmethod
    def from_experiences(cls, experiences) -> "Batch":
        return cls(
            np.array([e.s for e in experiences], dtype=np.int64),
            np.array([e.a for e in experiences], dtype=np.int64),
            np.array([e.r for e in experiences], dtype=np.float64),
            np.array([e.s_next for e in experiences], dtype=np.int64),
            np.array([e.terminal for e in experiences], dtype=bool),
        )


class LinearQ:
    """``Q(s, .) = weights[s] + bias``.

    ``weights`` and ``bias`` are views into one flat ``params`` vector so an
    optimizer can update both with a single array operation.
    """

    def __init__(self, weights, bias):
        weights = np.asarray(weights, dtype=np.float64)
        bias = np.asarray(bias, dtype=np.float64)
        if weights.ndim != 2 or bias.shape != (weights.shape[1],):
            raise ValueError(f"incompatible shapes {weights.shape} and {bias.shape}")
        self.params = np.concatenate([weights.ravel(), bias])
        n_w = weights.size
        self.weights = self.params[:n_w].reshape(weights.shape)
        self.bias = self.params[n_w:]

    def __repr__(self):
        return f"LinearQ(n_states={self.n_states}, n_actions={self.n_actions})"

    @classmethod
    def zeros(cls, n_states: int, n_actions: int) -> "LinearQ":
        return cls(np.zeros((n_states, n_actions)), np.zeros(n_actions))

    @classmethod
    def uniform(cls, n_states: int, n_actions: int, rng: np.random.Generator, scale: float = 0.05) -> "LinearQ":
        return cls(rng.uniform(-scale, scale, (n_states, n_actions)), np.zeros(n_actions))

    @property
    def n_states(self) -> int:
        return self.weights.shape[0]

    @property
    def n_actions(self) -> int:
        return self.weights.shape[1]

    def predict(self, s: int) -> np.ndarray:
        if not 0 <= s < self.n_states:
            raise IndexError(f"state {s} outside [0, {self.n_states})")
        return self.weights[s] + self.bias

    def predict_batch(self, s: np.ndarray) -> np.ndarray:
        return self.weights[s] + self.bias

    def __eq__(self, other):
        return isinstance(other, LinearQ) and np.array_equal(self.params, other.params) and self.weights.shape == other.weights.shape

    def copy(self) -> "LinearQ":
        return LinearQ(self.weights.copy(), self.bias.copy())

    def to_json(self) -> str:
        """Row-major flat snapshot with a shape header."""
        return json.dumps(
            {
                "shape": list(self.weights.shape),
                "weights": self.weights.ravel().tolist(),
                "bias": self.bias.tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "LinearQ":
        doc = json.loads(text)
        return cls(np.array(doc["weights"]).reshape(doc["shape"]), np.array(doc["bias"]))


def sync_target(online: LinearQ) -> LinearQ:
    """Frozen, independent copy of ``online``."""
    return online.copy()


def td_targets(target_q: LinearQ, batch: Batch, gamma: float) -> np.ndarray:
    """``r + gamma * max_a' Q_target(s', a')``, truncated to ``r`` at terminals."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
    bootstrap = target_q.predict_batch(batch.s_next).max(axis=1)
    return np.where(batch.terminal, batch.r, batch.r + gamma * bootstrap)


def loss_and_grad(q: LinearQ, batch: Batch, targets: np.ndarray, loss: str = "mse", huber_delta: float = 1.0):
    """Batch-mean TD loss and its gradient with respect to ``q.params``.

    The returned gradient is flat; ``grad[:n_w]`` reshapes to the weight
    matrix and ``grad[n_w:]`` is the bias part.
    """
    n = len(batch)
    n_a = q.n_actions
    n_w = q.weights.size
    w_idx = batch.s * n_a + batch.a
    params = q.params
    err = params[w_idx] + params[n_w + batch.a] - targets
    if loss == "mse":
        value = float(err @ err) / n
        dpred = (2.0 / n) * err
    elif loss == "huber":
        abs_err = np.abs(err)
        quad = np.minimum(abs_err, huber_delta)
        value = float(np.mean(0.5 * quad * quad + huber_delta * (abs_err - quad)))
        dpred = np.clip(err, -huber_delta, huber_delta) / n
    else:
        raise ValueError(f"unknown loss {loss!r}")
    grad = np.bincount(np.concatenate([w_idx, n_w + batch.a]), np.concatenate([dpred, dpred]), params.size)
    return value, grad


def split_grad(q: LinearQ, grad: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n_w = q.weights.size
    return grad[:n_w].reshape(q.weights.shape), grad[n_w:]


@dataclass
class SGD:
    learning_rate: float = 0.0005

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")

    def apply(self, q: LinearQ, grad: np.ndarray) -> None:
        q.params -= self.learning_rate * grad


@dataclass
class Adam:
    """Adam with bias-corrected moments.

    ``lazy=True`` updates moments and parameters only where the gradient is
    non-zero, which keeps one-hot locality: untouched states never move.
    """

    learning_rate: float = 0.0005
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lazy: bool = False
    t: int = 0
    m: np.ndarray | None = field(default=None, repr=False)
    v: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")

    def apply(self, q: LinearQ, grad: np.ndarray) -> None:
        if self.m is None:
            self.m = np.zeros_like(q.params)
            self.v = np.zeros_like(q.params)
        if self.m.shape != q.params.shape:
            raise ValueError("optimizer state does not match the Q-function shape")
        self.t += 1
        # bias corrections folded into the step size; eps is added after the sqrt
        lr_t = self.learning_rate * np.sqrt(1.0 - self.beta2**self.t) / (1.0 - self.beta1**self.t)
        m, v, p = self.m, self.v, q.params
        if self.lazy:
            mask = np.flatnonzero(grad)
            g = grad[mask]
            m[mask] = self.beta1 * m[mask] + (1.0 - self.beta1) * g
            v[mask] = self.beta2 * v[mask] + (1.0 - self.beta2) * g * g
            p[mask] -= lr_t * m[mask] / (np.sqrt(v[mask]) + self.eps)
        else:
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad * grad
            p -= lr_t * m / (np.sqrt(v) + self.eps)


def make_optimizer(name: str, learning_rate: float):
    if name == "adam":
        return Adam(learning_rate)
    if name == "lazy_adam":
        return Adam(learning_rate, lazy=True)
    if name == "sgd":
        return SGD(learning_rate)
    raise ValueError(f"unknown optimizer {name!r}")


def train_step(q: LinearQ, optimizer, batch: Batch, targets: np.ndarray, loss: str = "mse") -> float:
    """One gradient step on the batch TD loss; mutates ``q`` and ``optimizer``."""
    if len(batch) == 0 or len(batch) != len(targets):
        raise ValueError(f"batch of {len(batch)} with {len(targets)} targets")
    value, grad = loss_and_grad(q, batch, targets, loss)
    if not np.isfinite(value):
        raise NumericalError(f"non-finite TD loss {value}")
    optimizer.apply(q, grad)
    return value
