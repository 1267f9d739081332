"""Time-step batches, the synthetic class-prior-shift generator, and dataset I/O.

A dataset is one CSV (``t,y,f0,...,f{d-1}``) plus a ``key=value`` manifest
next to it carrying ``num_classes``, ``feature_dim``, ``period``, ``source``
and ``seed``.  Synthetic datasets also record the generator parameters so the
Bayes oracle can be rebuilt from the files alone.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .model import softmax


class DataValidationError(ValueError):
    """Raised for malformed dataset files or inconsistent batches."""


@dataclass(frozen=True)
class TimeStepBatch:
    """Labeled examples of one time step ``t`` (1-based)."""

    t: int
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        X = np.array(self.features, dtype=np.float64)
        y = np.array(self.labels, dtype=np.intp)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise DataValidationError(
                f"step {self.t}: features must be (n, d) and labels (n,), got {X.shape}, {y.shape}"
            )
        X.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    def __len__(self) -> int:
        return self.labels.shape[0]

    def take(self, idx) -> TimeStepBatch:
        return TimeStepBatch(self.t, self.features[idx], self.labels[idx])

    def __eq__(self, other):
        if not isinstance(other, TimeStepBatch):
            return NotImplemented
        return (
            self.t == other.t
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
        )

    __hash__ = None


@dataclass(frozen=True)
class StreamDataset:
    num_classes: int
    feature_dim: int
    batches: tuple[TimeStepBatch, ...]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "batches", tuple(self.batches))
        meta = {"period": 24, "source": "unknown", "seed": ""}
        meta.update(self.metadata)
        object.__setattr__(self, "metadata", meta)
        for prev, cur in zip(self.batches, self.batches[1:]):
            if cur.t != prev.t + 1:
                raise DataValidationError(f"time steps must increase by 1: {prev.t} -> {cur.t}")
        for b in self.batches:
            if len(b) == 0:
                raise DataValidationError(f"step {b.t} has no examples")
            if b.features.shape[1] != self.feature_dim:
                raise DataValidationError(f"step {b.t}: feature dimension {b.features.shape[1]}")
            if b.labels.min() < 0 or b.labels.max() >= self.num_classes:
                raise DataValidationError(f"step {b.t}: label outside [0, {self.num_classes})")

    @property
    def period(self) -> int:
        return int(self.metadata["period"])

    def __len__(self) -> int:
        return len(self.batches)

    def __eq__(self, other):
        if not isinstance(other, StreamDataset):
            return NotImplemented
        return (
            self.num_classes == other.num_classes
            and self.feature_dim == other.feature_dim
            and self.batches == other.batches
            and self.metadata == other.metadata
        )

    __hash__ = None


# --------------------------------------------------------------------------
# synthetic generator


def _default_means(num_classes: int, feature_dim: int, radius: float = 1.0) -> np.ndarray:
    """Class means spread evenly on a circle in the first two coordinates."""
    means = np.zeros((num_classes, feature_dim))
    angles = 2 * np.pi * np.arange(num_classes) / num_classes
    means[:, 0] = radius * np.cos(angles)
    if feature_dim > 1:
        means[:, 1] = radius * np.sin(angles)
    else:
        means[:, 0] = radius * np.linspace(-1.0, 1.0, num_classes)
    return means


@dataclass(frozen=True)
class GeneratorConfig:
    num_classes: int = 3
    feature_dim: int = 2
    period: int = 24
    steps: int = 480
    examples_per_step: int = 600
    class_stddev: float = 0.7
    class_means: np.ndarray | None = None
    prior_amplitudes: np.ndarray | None = None
    prior_phases: np.ndarray | None = None
    seed: int = 0

    def __post_init__(self):
        L, d = self.num_classes, self.feature_dim
        if L < 2:
            raise ValueError("num_classes must be >= 2")
        if d < 1:
            raise ValueError("feature_dim must be >= 1")
        if self.period < 1:
            raise ValueError("period must be >= 1")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.examples_per_step < L:
            raise ValueError("examples_per_step must be >= num_classes")
        if not (self.class_stddev > 0 and math.isfinite(self.class_stddev)):
            raise ValueError("class_stddev must be > 0")

        means = _default_means(L, d) if self.class_means is None else self.class_means
        amps = np.full(L, 1.0) if self.prior_amplitudes is None else self.prior_amplitudes
        phases = (
            2 * np.pi * np.arange(L) / L if self.prior_phases is None else self.prior_phases
        )
        means = np.array(means, dtype=np.float64)
        amps = np.array(amps, dtype=np.float64)
        phases = np.array(phases, dtype=np.float64)
        if means.shape != (L, d):
            raise ValueError(f"class_means must have shape ({L}, {d}), got {means.shape}")
        if amps.shape != (L,) or phases.shape != (L,):
            raise ValueError(f"prior_amplitudes and prior_phases must have length {L}")
        for name, arr in (("class_means", means), ("prior_amplitudes", amps), ("prior_phases", phases)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} must be finite")
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)


def true_prior(config: GeneratorConfig, t: int) -> np.ndarray:
    """Softmax of per-class sinusoids ``a_y sin(2π t / P + φ_y)``; periodic in ``t``."""
    # reduce t modulo the period first so that t and t + P give bitwise-equal priors
    phase = 2 * np.pi * ((t - 1) % config.period + 1) / config.period
    return softmax(config.prior_amplitudes * np.sin(phase + config.prior_phases))


def generate_synthetic(config: GeneratorConfig) -> StreamDataset:
    """Draw labels from the time-varying prior, then ``x | y ~ N(mean_y, σ² I)``."""
    rng = np.random.default_rng(config.seed)
    n, d = config.examples_per_step, config.feature_dim
    batches = []
    for t in range(1, config.steps + 1):
        y = rng.choice(config.num_classes, size=n, p=true_prior(config, t))
        X = config.class_means[y] + config.class_stddev * rng.standard_normal((n, d))
        batches.append(TimeStepBatch(t, X, y))
    return StreamDataset(
        config.num_classes,
        config.feature_dim,
        batches,
        metadata=generator_metadata(config),
    )


def bayes_log_scores(config: GeneratorConfig, x, t: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    sq = np.sum((x[..., None, :] - config.class_means) ** 2, axis=-1)
    return np.log(true_prior(config, t)) - sq / (2 * config.class_stddev**2)


def bayes_posterior(config: GeneratorConfig, x, t: int) -> np.ndarray:
    """True ``p_t(y | x)`` of the generator."""
    return softmax(bayes_log_scores(config, x, t))


def bayes_predict(config: GeneratorConfig, x, t: int) -> np.ndarray:
    return np.argmax(bayes_log_scores(config, x, t), axis=-1)


# --------------------------------------------------------------------------
# splitting and realizations


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    seed: int = 0
    realization: int = 0

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must lie in (0, 1)")


def split_train_eval(batch: TimeStepBatch, spec: SplitSpec) -> tuple[TimeStepBatch, TimeStepBatch]:
    """Seeded random partition into ``ceil(f n)`` training and remaining eval examples.

    The random stream depends on ``(spec.seed, spec.realization, batch.t)``.
    At least one example always goes to evaluation.
    """
    n = len(batch)
    if n < 2:
        raise DataValidationError(f"step {batch.t}: need at least 2 examples to split, got {n}")
    # round first: 0.8 * 15 == 12.000000000000002 in floating point
    n_train = min(math.ceil(round(spec.train_fraction * n, 9)), n - 1)
    rng = np.random.default_rng([spec.seed, spec.realization, batch.t])
    order = rng.permutation(n)
    train_idx = np.sort(order[:n_train])
    eval_idx = np.sort(order[n_train:])
    return batch.take(train_idx), batch.take(eval_idx)


def subsample_realization(dataset: StreamDataset, stride: int, offset: int) -> StreamDataset:
    """Keep positions ``offset, offset + stride, ...`` of every batch."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if not 0 <= offset < stride:
        raise ValueError(f"offset must lie in [0, {stride}), got {offset}")
    batches = [b.take(slice(offset, None, stride)) for b in dataset.batches]
    meta = dict(dataset.metadata)
    if stride > 1:
        meta["realization"] = f"{offset}/{stride}"
    return replace(dataset, batches=tuple(batches), metadata=meta)


# --------------------------------------------------------------------------
# file I/O

_GENERATOR_KEYS = ("class_stddev", "class_means", "prior_amplitudes", "prior_phases")


def generator_metadata(config: GeneratorConfig) -> dict:
    return {
        "source": "synthetic",
        "seed": config.seed,
        "period": config.period,
        "class_stddev": config.class_stddev,
        "class_means": config.class_means.tolist(),
        "prior_amplitudes": config.prior_amplitudes.tolist(),
        "prior_phases": config.prior_phases.tolist(),
    }


def generator_from_metadata(dataset: StreamDataset) -> GeneratorConfig | None:
    """Rebuild the generator config of a synthetic dataset, or ``None`` for real data."""
    meta = dataset.metadata
    if meta.get("source") != "synthetic" or any(k not in meta for k in _GENERATOR_KEYS):
        return None
    return GeneratorConfig(
        num_classes=dataset.num_classes,
        feature_dim=dataset.feature_dim,
        period=int(meta["period"]),
        steps=max(len(dataset), 1),
        examples_per_step=dataset.num_classes,
        class_stddev=float(meta["class_stddev"]),
        class_means=np.array(meta["class_means"]),
        prior_amplitudes=np.array(meta["prior_amplitudes"]),
        prior_phases=np.array(meta["prior_phases"]),
        seed=int(meta.get("seed", 0)),
    )


def manifest_path(path) -> Path:
    return Path(path).with_suffix(".manifest")


def _format_value(value) -> str:
    if isinstance(value, (list, tuple)):
        if value and isinstance(value[0], (list, tuple)):
            return ";".join(_format_value(row) for row in value)
        return ",".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_manifest(dataset: StreamDataset, path) -> None:
    meta = {"num_classes": dataset.num_classes, "feature_dim": dataset.feature_dim}
    meta.update(dataset.metadata)
    meta.pop("realization", None)
    with open(manifest_path(path), "w") as fh:
        for key, value in meta.items():
            fh.write(f"{key}={_format_value(value)}\n")


def read_manifest(path) -> dict:
    mpath = manifest_path(path)
    meta = {}
    with open(mpath) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise DataValidationError(f"{mpath}:{lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            meta[key] = value
    for key in ("num_classes", "feature_dim"):
        if key not in meta:
            raise DataValidationError(f"{mpath}: missing required key {key!r}")
    out = {}
    for key, value in meta.items():
        if key in ("num_classes", "feature_dim", "period"):
            out[key] = int(value)
        elif key == "seed":
            out[key] = int(value) if value.lstrip("-").isdigit() else value
        elif key == "class_stddev":
            out[key] = float(value)
        elif key == "class_means":
            out[key] = [[float(v) for v in row.split(",")] for row in value.split(";")]
        elif key in ("prior_amplitudes", "prior_phases"):
            out[key] = [float(v) for v in value.split(",")]
        else:
            out[key] = value
    return out


def save_dataset(dataset: StreamDataset, path) -> None:
    path = Path(path)
    d = dataset.feature_dim
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "y"] + [f"f{j}" for j in range(d)])
        for batch in dataset.batches:
            for x, y in zip(batch.features.tolist(), batch.labels.tolist()):
                writer.writerow([batch.t, y] + [repr(v) for v in x])
    write_manifest(dataset, path)


def load_dataset(path) -> StreamDataset:
    """Load a dataset CSV and its manifest, validating every row."""
    path = Path(path)
    meta = read_manifest(path)
    L, d = meta.pop("num_classes"), meta.pop("feature_dim")
    steps: list[tuple[int, list, list]] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataValidationError(f"{path}: empty file")
        expected = ["t", "y"] + [f"f{j}" for j in range(d)]
        if [h.strip() for h in header] != expected:
            raise DataValidationError(f"{path}:1: header must be {','.join(expected)}")
        for row in reader:
            lineno = reader.line_num
            if not row:
                continue
            if len(row) != d + 2:
                raise DataValidationError(
                    f"{path}:{lineno}: expected {d + 2} columns, got {len(row)}"
                )
            try:
                t, y = int(row[0]), int(row[1])
                x = [float(v) for v in row[2:]]
            except ValueError as exc:
                raise DataValidationError(f"{path}:{lineno}: {exc}") from None
            if not 0 <= y < L:
                raise DataValidationError(f"{path}:{lineno}: label {y} outside [0, {L})")
            if not all(math.isfinite(v) for v in x):
                raise DataValidationError(f"{path}:{lineno}: non-finite feature")
            if not steps or t != steps[-1][0]:
                if steps and t != steps[-1][0] + 1:
                    raise DataValidationError(
                        f"{path}:{lineno}: time step {t} follows {steps[-1][0]}"
                    )
                if not steps and t < 1:
                    raise DataValidationError(f"{path}:{lineno}: time steps are 1-based")
                steps.append((t, [], []))
            steps[-1][1].append(x)
            steps[-1][2].append(y)
    if not steps:
        raise DataValidationError(f"{path}: no data rows")
    batches = [
        TimeStepBatch(t, np.array(xs, dtype=np.float64).reshape(-1, d), np.array(ys))
        for t, xs, ys in steps
    ]
    return StreamDataset(L, d, batches, metadata=meta)
