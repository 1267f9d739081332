"""Evaluation loop: predict each step before learning from it, across realizations."""

from __future__ import annotations

import csv
import json
import logging
import os
import shutil
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from . import strategies
from .metrics import AccuracySeries, write_series_csv
from .model import DEFAULT_FLOOR, LinearModel, predict
from .optim import TrainConfig
from .stream import (
    SplitSpec,
    StreamDataset,
    TimeStepBatch,
    bayes_predict,
    generator_from_metadata,
    split_train_eval,
    subsample_realization,
)

log = logging.getLogger(__name__)

ORACLE = "bayes"
DEFAULT_METHODS = ("limes", "incremental", "random", "ensemble", "restart")
# With ~50 training examples per realization and step there is one Adam
# update per step, so the stock 0.001 step size leaves the model untrained.
DESK_LEARNING_RATE = 0.03


class ResumeError(ValueError):
    """A checkpoint does not fit the dataset or configuration being resumed."""


@dataclass(frozen=True)
class ExperimentConfig:
    methods: tuple[str, ...] = DEFAULT_METHODS
    period: int | None = None  # None: take it from the dataset manifest
    split_fraction: float = 0.8
    stride: int = 10
    realizations: int = 10
    seed: int = 0
    train: TrainConfig = field(default_factory=lambda: TrainConfig(DESK_LEARNING_RATE))
    ensemble_size: int = 24
    retain_batches: bool = False
    erm_epochs: int = 1
    floor: float = DEFAULT_FLOOR
    history_capacity: int | None = None
    oracle: bool = True
    checkpoints: bool = True

    def __post_init__(self):
        methods = tuple(str(m) for m in self.methods)
        if not methods:
            raise ValueError("methods: at least one method is required")
        for m in methods:
            try:
                kind = strategies.MethodKind(m)
            except ValueError:
                raise ValueError(f"methods: unknown method {m!r}") from None
            if kind is strategies.MethodKind.ERM_FULL and not self.retain_batches:
                raise ValueError("methods: erm_full requires retain_batches = true")
        if len(set(methods)) != len(methods):
            raise ValueError("methods: duplicate method names")
        object.__setattr__(self, "methods", methods)
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if not 1 <= self.realizations <= self.stride:
            raise ValueError("realizations must lie in [1, stride]")
        if self.period is not None and self.period < 1:
            raise ValueError("period must be >= 1")
        SplitSpec(self.split_fraction)

    def learner_config(self) -> strategies.LearnerConfig:
        return strategies.LearnerConfig(
            train=self.train,
            ensemble_size=self.ensemble_size,
            retain_batches=self.retain_batches,
            erm_epochs=self.erm_epochs,
            floor=self.floor,
            history_capacity=self.history_capacity,
        )


def learner_seed(seed: int, realization: int) -> int:
    """Per-realization learner seed, shared by all methods of that realization."""
    return int(np.random.SeedSequence([seed, realization]).generate_state(1)[0])


def split_steps(
    dataset: StreamDataset, config: ExperimentConfig, realization: int
) -> list[tuple[TimeStepBatch, TimeStepBatch]]:
    """Train/eval splits of every step of one realization, except the last step."""
    spec = SplitSpec(config.split_fraction, config.seed, realization)
    return [split_train_eval(b, spec) for b in dataset.batches[:-1]]


def run_stream(
    state: strategies.LearnerState,
    steps: Iterable[tuple[TimeStepBatch, TimeStepBatch]],
    series: AccuracySeries,
    on_predict: Callable[[int, np.ndarray], None] | None = None,
    on_observe: Callable[[strategies.LearnerState], None] | None = None,
) -> strategies.LearnerState:
    """Interleave prediction and learning.

    For each ``(train, eval)`` pair the current predictor is scored on
    ``eval`` first and only then does the learner observe ``train``.  Before
    the first observation every method predicts with the all-zero model.
    """
    zero = LinearModel.zeros(state.feature_dim, state.num_classes)
    for train, ev in steps:
        model = strategies.predictor_for_next(state) if state.t > 0 else zero
        labels = predict(model, ev.features)
        series.append(ev.t, float(np.mean(labels == ev.labels)))
        if on_predict is not None:
            on_predict(ev.t, labels)
        state = strategies.observe(state, train)
        if on_observe is not None:
            on_observe(state)
    return state


def oracle_series(dataset: StreamDataset, config: ExperimentConfig, realization: int) -> AccuracySeries:
    gen = generator_from_metadata(dataset)
    if gen is None:
        raise ValueError("dataset carries no generator parameters")
    data = subsample_realization(dataset, config.stride, realization)
    series = AccuracySeries(ORACLE, realization)
    for _, ev in split_steps(data, config, realization):
        acc = np.mean(bayes_predict(gen, ev.features, ev.t) == ev.labels)
        series.append(ev.t, float(acc))
    return series


# --------------------------------------------------------------------------
# checkpoints


def _checkpoint_dir(out_dir: Path, method: str, realization: int) -> Path:
    return out_dir / "checkpoints" / f"{method}_r{realization}"


def _write_partial_series(series: AccuracySeries, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "accuracy"])
        for t, acc in zip(series.steps, series.accuracy):
            writer.writerow([t, repr(acc)])


def _read_partial_series(path: Path, method: str, realization: int) -> AccuracySeries:
    series = AccuracySeries(method, realization)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    for t, acc in rows:
        series.append(int(t), float(acc))
    return series


def save_checkpoint(out_dir: Path, state: strategies.LearnerState, series: AccuracySeries) -> None:
    target = _checkpoint_dir(out_dir, series.method, series.realization)
    tmp = target.with_name(target.name + ".tmp")
    if tmp.exists():
        shutil.rmtree(tmp)
    strategies.save_state(state, tmp)
    _write_partial_series(series, tmp / "series.csv")
    if target.exists():
        shutil.rmtree(target)
    tmp.rename(target)


def load_checkpoint(out_dir: Path, dataset: StreamDataset, config: ExperimentConfig, method: str, realization: int):
    target = _checkpoint_dir(out_dir, method, realization)
    if not (target / "state.json").exists():
        return None
    try:
        state = strategies.load_state(target)
    except (OSError, KeyError, ValueError) as exc:
        raise ResumeError(f"{target}: unreadable checkpoint ({exc})") from None
    if (state.num_classes, state.feature_dim) != (dataset.num_classes, dataset.feature_dim):
        raise ResumeError(
            f"{target}: checkpoint has L={state.num_classes}, d={state.feature_dim}; "
            f"dataset has L={dataset.num_classes}, d={dataset.feature_dim}"
        )
    if state.kind.value != method or state.config != config.learner_config():
        raise ResumeError(f"{target}: checkpoint was written with a different configuration")
    series = _read_partial_series(target / "series.csv", method, realization)
    if len(series) != state.t:
        raise ResumeError(f"{target}: series length {len(series)} != learner step {state.t}")
    return state, series


# --------------------------------------------------------------------------
# orchestration


def run_method(
    dataset: StreamDataset,
    config: ExperimentConfig,
    method: str,
    realization: int,
    out_dir=None,
    resume: bool = False,
) -> AccuracySeries:
    """Run one (method, realization) pair and return its accuracy series."""
    out_dir = Path(out_dir) if out_dir is not None else None
    period = config.period or dataset.period
    data = subsample_realization(dataset, config.stride, realization)
    steps = split_steps(data, config, realization)

    loaded = None
    if resume and out_dir is not None:
        loaded = load_checkpoint(out_dir, dataset, config, method, realization)
    if loaded is None:
        state = strategies.create(
            method,
            dataset.num_classes,
            dataset.feature_dim,
            config.learner_config(),
            learner_seed(config.seed, realization),
        )
        series = AccuracySeries(method, realization)
    else:
        state, series = loaded
        log.info("resuming %s r%d at step %d", method, realization, state.t + 1)

    def checkpoint(s: strategies.LearnerState) -> None:
        if s.t % period == 0 or s.t == len(steps):
            save_checkpoint(out_dir, s, series)

    on_observe = checkpoint if (out_dir is not None and config.checkpoints) else None
    run_stream(state, steps[state.t :], series, on_observe=on_observe)
    return series


def _run_job(args):
    dataset, config, method, realization, out_dir, resume = args
    if method == ORACLE:
        return oracle_series(dataset, config, realization)
    return run_method(dataset, config, method, realization, out_dir, resume)


def default_workers() -> int:
    env = os.environ.get("STREAM_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_experiment(
    dataset: StreamDataset,
    config: ExperimentConfig,
    out_dir=None,
    resume: bool = False,
    workers: int | None = None,
) -> list[AccuracySeries]:
    """All (method, realization) runs, merged in a fixed order.

    Order is methods as configured, then the Bayes oracle when the dataset is
    synthetic and ``config.oracle`` is set; realizations ascending within each.
    """
    if len(dataset) < 2:
        raise ValueError("need at least two time steps")
    methods = list(config.methods)
    if config.oracle and generator_from_metadata(dataset) is not None:
        methods.append(ORACLE)
    jobs = [
        (dataset, config, m, r, out_dir, resume)
        for m in methods
        for r in range(config.realizations)
    ]
    workers = workers or default_workers()
    if workers <= 1 or len(jobs) == 1:
        results = [_run_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            results = list(pool.map(_run_job, jobs))

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_series_csv(results, out_dir / "timeseries.csv")
        meta = {
            "period": config.period or dataset.period,
            "methods": methods,
            "realizations": config.realizations,
            "steps": len(dataset) - 1,
        }
        (out_dir / "run.json").write_text(json.dumps(meta, indent=1) + "\n")
    return results
