"""Empirical class frequencies and nearest-history forecasting of the next prior."""

from __future__ import annotations

import csv
from collections import deque
from pathlib import Path

import numpy as np


def empirical_distribution(labels, num_classes: int, pseudo_count: float = 0.0) -> np.ndarray:
    """Class frequencies ``(count_y + a) / (n + L a)`` for pseudo count ``a``."""
    if num_classes < 2:
        raise ValueError("num_classes must be >= 2")
    if pseudo_count < 0:
        raise ValueError("pseudo_count must be >= 0")
    labels = np.asarray(labels, dtype=np.intp).ravel()
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ValueError(f"labels must lie in [0, {num_classes})")
    if labels.size == 0 and pseudo_count == 0:
        raise ValueError("empty label set with zero pseudo count has no distribution")
    counts = np.bincount(labels, minlength=num_classes).astype(np.float64)
    return (counts + pseudo_count) / (labels.size + num_classes * pseudo_count)


def l1_distance(p, q) -> float:
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {q.shape}")
    return float(np.sum(np.abs(p - q)))


class DistributionHistory:
    """Append-only record of per-step class distributions.

    With ``capacity`` set, only the most recent entries are kept (a rolling
    buffer); ``start`` then tracks the 1-based time index of the oldest one.
    """

    def __init__(self, num_classes: int, capacity: int | None = None):
        if capacity is not None and capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.num_classes = num_classes
        self.capacity = capacity
        self._entries: deque[np.ndarray] = deque(maxlen=capacity)
        self._count = 0

    def append(self, dist) -> None:
        dist = np.array(dist, dtype=np.float64)
        if dist.shape != (self.num_classes,):
            raise ValueError(f"expected distribution of length {self.num_classes}")
        dist.flags.writeable = False
        self._entries.append(dist)
        self._count += 1

    @property
    def entries(self) -> list[np.ndarray]:
        return list(self._entries)

    @property
    def start(self) -> int:
        """Time index of the oldest retained entry."""
        return self._count - len(self._entries) + 1

    @property
    def total_appended(self) -> int:
        return self._count

    def __len__(self) -> int:
        return len(self._entries)

    def __getitem__(self, i) -> np.ndarray:
        return self._entries[i]

    def at(self, tau: int) -> np.ndarray:
        """Entry for 1-based time index ``tau``."""
        i = tau - self.start
        if not 0 <= i < len(self._entries):
            raise IndexError(f"time index {tau} not retained")
        return self._entries[i]

    def copy(self) -> DistributionHistory:
        other = DistributionHistory(self.num_classes, self.capacity)
        other._entries = deque(self._entries, maxlen=self.capacity)
        other._count = self._count
        return other

    def __eq__(self, other):
        if not isinstance(other, DistributionHistory):
            return NotImplemented
        return (
            self.num_classes == other.num_classes
            and self.capacity == other.capacity
            and self._count == other._count
            and len(self) == len(other)
            and all(np.array_equal(a, b) for a, b in zip(self._entries, other._entries))
        )

    __hash__ = None

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["tau"] + [f"p{y}" for y in range(self.num_classes)])
            for tau, dist in enumerate(self._entries, self.start):
                writer.writerow([tau] + [repr(v) for v in dist.tolist()])

    @classmethod
    def from_csv(cls, path, capacity: int | None = None) -> DistributionHistory:
        path = Path(path)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise ValueError(f"{path}: empty history file")
        num_classes = len(rows[0]) - 1
        history = cls(num_classes, capacity)
        for lineno, row in enumerate(rows[1:], 2):
            if len(row) != num_classes + 1:
                raise ValueError(f"{path}:{lineno}: expected {num_classes + 1} columns")
            tau = int(row[0])
            if history._count == 0:
                history._count = tau - 1
            elif tau != history._count + 1:
                raise ValueError(f"{path}:{lineno}: time index {tau} out of order")
            history.append([float(v) for v in row[1:]])
        return history


def forecast_index(history: DistributionHistory) -> int | None:
    """Position (0-based, within retained entries) of the most similar earlier step.

    Compares every entry except the last against the last one.  Ties go to
    the most recent candidate.  Returns ``None`` when there is no earlier entry.
    """
    if len(history) == 0:
        raise ValueError("history is empty")
    if len(history) == 1:
        return None
    entries = np.stack(history.entries)
    dists = np.sum(np.abs(entries[:-1] - entries[-1]), axis=1)
    # last occurrence of the minimum
    return len(dists) - 1 - int(np.argmin(dists[::-1]))


def forecast_next(history: DistributionHistory, current=None) -> np.ndarray:
    """Predict the class distribution of the step after the newest entry.

    Finds the earlier step whose distribution is L1-closest to the newest one
    and returns the distribution that followed it.  With a single entry the
    newest distribution itself is returned.  ``current``, if given, must equal
    the newest history entry.
    """
    if len(history) == 0:
        raise ValueError("history is empty")
    if current is not None and not np.array_equal(np.asarray(current, dtype=np.float64), history[-1]):
        raise ValueError("current distribution must be the newest history entry")
    i = forecast_index(history)
    if i is None:
        return history[-1]
    return history[i + 1]
