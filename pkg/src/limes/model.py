"""Log-linear classifier and analytic class-prior adaptation of its biases."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_FLOOR = 1e-12


@dataclass(frozen=True)
class LinearModel:
    """Softmax classifier ``p(y|x) ∝ exp(w_y·x + b_y)``.

    ``weights`` has shape ``(d, L)``; column ``y`` is the weight vector of
    class ``y``.  Arrays are copied and made read-only on construction.
    """

    weights: np.ndarray
    biases: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        b = np.array(self.biases, dtype=np.float64)
        if w.ndim != 2 or b.ndim != 1 or w.shape[1] != b.shape[0]:
            raise ValueError(
                f"weights must be (d, L) and biases (L,), got {w.shape} and {b.shape}"
            )
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ValueError("model parameters must be finite")
        w.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "biases", b)

    @classmethod
    def zeros(cls, feature_dim: int, num_classes: int) -> LinearModel:
        if feature_dim < 1 or num_classes < 2:
            raise ValueError("need feature_dim >= 1 and num_classes >= 2")
        return cls(np.zeros((feature_dim, num_classes)), np.zeros(num_classes))

    @property
    def feature_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def num_classes(self) -> int:
        return self.weights.shape[1]

    def __eq__(self, other):
        if not isinstance(other, LinearModel):
            return NotImplemented
        return np.array_equal(self.weights, other.weights) and np.array_equal(
            self.biases, other.biases
        )

    __hash__ = None


def _check_features(model: LinearModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.feature_dim or x.ndim not in (1, 2):
        raise ValueError(
            f"feature dimension mismatch: model expects {model.feature_dim}, got shape {x.shape}"
        )
    return x


def logits(model: LinearModel, x) -> np.ndarray:
    """Unnormalized class scores. Accepts one vector ``(d,)`` or a matrix ``(n, d)``."""
    x = _check_features(model, x)
    return x @ model.weights + model.biases


def softmax(scores: np.ndarray) -> np.ndarray:
    """Max-stabilized softmax along the last axis."""
    z = scores - np.max(scores, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def log_softmax(scores: np.ndarray) -> np.ndarray:
    z = scores - np.max(scores, axis=-1, keepdims=True)
    return z - np.log(np.sum(np.exp(z), axis=-1, keepdims=True))


def posterior(model: LinearModel, x) -> np.ndarray:
    return softmax(logits(model, x))


def predict(model: LinearModel, x):
    """Argmax decision; ``np.argmax`` returns the lowest index among ties."""
    scores = logits(model, x)
    labels = np.argmax(scores, axis=-1)
    return int(labels) if np.ndim(labels) == 0 else labels


def as_distribution(probs, num_classes: int | None = None, atol: float = 1e-9) -> np.ndarray:
    """Validate a class distribution and return it as a float64 array."""
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 1:
        raise ValueError(f"class distribution must be 1-D, got shape {p.shape}")
    if num_classes is not None and p.shape[0] != num_classes:
        raise ValueError(f"expected {num_classes} classes, got {p.shape[0]}")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ValueError("class probabilities must be finite and non-negative")
    if abs(p.sum() - 1.0) > atol:
        raise ValueError(f"class probabilities sum to {p.sum()!r}, not 1")
    return p


def prior_log_ratio(source, target, floor: float = DEFAULT_FLOOR) -> np.ndarray:
    """``log(max(target, floor) / max(source, floor))`` elementwise."""
    if floor <= 0:
        raise ValueError("floor must be positive")
    source = np.asarray(source, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if source.shape != target.shape or source.ndim != 1:
        raise ValueError(f"distribution shapes differ: {source.shape} vs {target.shape}")
    return np.log(np.maximum(target, floor) / np.maximum(source, floor))


def adapt_bias(
    model: LinearModel, source, target, floor: float = DEFAULT_FLOOR
) -> LinearModel:
    """Retarget ``model`` from class prior ``source`` to ``target``.

    Weights are shared; only the biases move, by ``log(target / source)``.
    ``target`` may be an unnormalized count vector: the resulting shift is
    then off by a class-independent constant, which the softmax ignores.
    """
    shift = prior_log_ratio(source, target, floor)
    if shift.shape[0] != model.num_classes:
        raise ValueError(
            f"distribution length {shift.shape[0]} != num_classes {model.num_classes}"
        )
    return LinearModel(model.weights, model.biases + shift)
