"""Cross-entropy training of a :class:`LinearModel` with Adam.

Training uses a fixed additive logit offset so that the model being fit is
the base model adapted to the current batch's class prior; the offset itself
is never trained.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import LinearModel, log_softmax, softmax
from .stream import TimeStepBatch


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    minibatch_size: int = 100
    epochs_per_step: int = 1
    # ablation switch: start every time step with fresh Adam moments
    reset_adam_each_step: bool = False

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        for name in ("beta1", "beta2"):
            value = getattr(self, name)
            if not 0 <= value < 1:
                raise ValueError(f"{name} must lie in [0, 1), got {value}")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if self.minibatch_size < 1:
            raise ValueError("minibatch_size must be >= 1")
        if self.epochs_per_step < 1:
            raise ValueError("epochs_per_step must be >= 1")


@dataclass(frozen=True)
class Gradient:
    d_weights: np.ndarray
    d_biases: np.ndarray


@dataclass(frozen=True)
class AdamState:
    m_weights: np.ndarray
    m_biases: np.ndarray
    v_weights: np.ndarray
    v_biases: np.ndarray
    step_count: int = 0

    @classmethod
    def zeros_like(cls, model: LinearModel) -> AdamState:
        w, b = model.weights.shape, model.biases.shape
        return cls(np.zeros(w), np.zeros(b), np.zeros(w), np.zeros(b), 0)

    def __eq__(self, other):
        if not isinstance(other, AdamState):
            return NotImplemented
        return self.step_count == other.step_count and all(
            np.array_equal(getattr(self, k), getattr(other, k))
            for k in ("m_weights", "m_biases", "v_weights", "v_biases")
        )

    __hash__ = None


def loss_and_gradient(
    model: LinearModel, offset, features, labels
) -> tuple[float, Gradient]:
    """Mean cross-entropy of ``softmax(x W + b + offset)`` and its exact gradient.

    Parameters
    ----------
    model : LinearModel
    offset : array_like, shape (L,)
        Constant logit shift, e.g. ``log p(y)`` to train the prior-adapted model.
    features : array_like, shape (n, d)
    labels : array_like of int, shape (n,)
    """
    X = np.atleast_2d(np.asarray(features, dtype=np.float64))
    y = np.asarray(labels, dtype=np.intp)
    offset = np.asarray(offset, dtype=np.float64)
    n = X.shape[0]
    if n == 0 or y.shape != (n,):
        raise ValueError("batch must be non-empty with one label per example")
    if X.shape[1] != model.feature_dim:
        raise ValueError(f"feature dimension {X.shape[1]} != model dimension {model.feature_dim}")
    if offset.shape != (model.num_classes,):
        raise ValueError(f"offset must have shape ({model.num_classes},)")

    scores = X @ model.weights + model.biases + offset
    rows = np.arange(n)
    loss = -float(np.mean(log_softmax(scores)[rows, y]))

    residual = softmax(scores)
    residual[rows, y] -= 1.0
    residual /= n
    return loss, Gradient(X.T @ residual, residual.sum(axis=0))


def adam_step(
    model: LinearModel, state: AdamState, grad: Gradient, config: TrainConfig
) -> tuple[LinearModel, AdamState]:
    if grad.d_weights.shape != model.weights.shape or grad.d_biases.shape != model.biases.shape:
        raise ValueError("gradient shape does not match model")
    if state.m_weights.shape != model.weights.shape or state.m_biases.shape != model.biases.shape:
        raise ValueError("optimizer state shape does not match model")
    if not (np.all(np.isfinite(grad.d_weights)) and np.all(np.isfinite(grad.d_biases))):
        raise ValueError("non-finite gradient")

    b1, b2 = config.beta1, config.beta2
    t = state.step_count + 1
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t

    def update(param, m, v, g):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        step = config.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + config.epsilon)
        return param - step, m, v

    w, mw, vw = update(model.weights, state.m_weights, state.v_weights, grad.d_weights)
    b, mb, vb = update(model.biases, state.m_biases, state.v_biases, grad.d_biases)
    return LinearModel(w, b), AdamState(mw, mb, vw, vb, t)


def num_minibatches(n: int, minibatch_size: int) -> int:
    return math.ceil(n / minibatch_size)


def train_one_step(
    model: LinearModel,
    state: AdamState,
    batch: TimeStepBatch,
    offset,
    config: TrainConfig,
    rng_seed,
) -> tuple[LinearModel, AdamState]:
    """One (or ``epochs_per_step``) shuffled pass(es) of minibatch Adam over ``batch``.

    The trailing partial minibatch is kept.  ``rng_seed`` is anything
    accepted by :func:`numpy.random.default_rng`.
    """
    n = len(batch)
    if n == 0:
        raise ValueError("cannot train on an empty batch")
    rng = np.random.default_rng(rng_seed)
    size = config.minibatch_size
    for _ in range(config.epochs_per_step):
        order = rng.permutation(n)
        for start in range(0, n, size):
            idx = order[start : start + size]
            _, grad = loss_and_gradient(model, offset, batch.features[idx], batch.labels[idx])
            model, state = adam_step(model, state, grad, config)
    return model, state
