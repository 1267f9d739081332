"""Streaming learners: LIMES and the baselines it is compared against.

Every method follows the same value-in/value-out contract::

    state = create(kind, num_classes, feature_dim, config, seed)
    model = predictor_for_next(state)   # classify step t + 1
    state = observe(state, batch)       # then learn from step t + 1

``observe`` and ``predictor_for_next`` never mutate their input state.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .forecast import DistributionHistory, empirical_distribution, forecast_next
from .model import DEFAULT_FLOOR, LinearModel, adapt_bias
from .optim import AdamState, TrainConfig, train_one_step
from .stream import TimeStepBatch


class MethodKind(str, enum.Enum):
    LIMES = "limes"
    INCREMENTAL = "incremental"
    RANDOM = "random"
    ENSEMBLE = "ensemble"
    RESTART = "restart"
    ERM_FULL = "erm_full"

    def __str__(self):
        return self.value

    @property
    def adapts(self) -> bool:
        return self in (MethodKind.LIMES, MethodKind.RANDOM)


@dataclass(frozen=True)
class LearnerConfig:
    train: TrainConfig = field(default_factory=TrainConfig)
    ensemble_size: int = 24
    retain_batches: bool = False
    erm_epochs: int = 1
    floor: float = DEFAULT_FLOOR
    history_capacity: int | None = None

    def __post_init__(self):
        if self.ensemble_size < 1:
            raise ValueError("ensemble_size must be >= 1")
        if self.erm_epochs < 1:
            raise ValueError("erm_epochs must be >= 1")
        if not self.floor > 0:
            raise ValueError("floor must be > 0")


@dataclass(frozen=True)
class LearnerState:
    kind: MethodKind
    num_classes: int
    feature_dim: int
    config: LearnerConfig
    seed: int
    t: int = 0
    base: LinearModel | None = None
    adam: AdamState | None = None
    history: DistributionHistory | None = None
    members: tuple[tuple[LinearModel, AdamState], ...] = ()
    member_updates: tuple[int, ...] = ()
    retained: tuple[TimeStepBatch, ...] = ()

    def __eq__(self, other):
        if not isinstance(other, LearnerState):
            return NotImplemented
        return all(
            getattr(self, k) == getattr(other, k)
            for k in (
                "kind", "num_classes", "feature_dim", "config", "seed", "t", "base",
                "adam", "history", "members", "member_updates", "retained",
            )
        )

    __hash__ = None


def create(
    kind, num_classes: int, feature_dim: int, config: LearnerConfig | None = None, seed: int = 0
) -> LearnerState:
    kind = MethodKind(kind)
    config = config or LearnerConfig()
    if num_classes < 2 or feature_dim < 1:
        raise ValueError("need num_classes >= 2 and feature_dim >= 1")
    if kind is MethodKind.ERM_FULL and not config.retain_batches:
        raise ValueError("erm_full requires retain_batches=True")

    zero = LinearModel.zeros(feature_dim, num_classes)
    fresh = AdamState.zeros_like(zero)
    state = LearnerState(kind, num_classes, feature_dim, config, seed)
    if kind is MethodKind.ENSEMBLE:
        k = config.ensemble_size
        return replace(state, members=((zero, fresh),) * k, member_updates=(0,) * k)
    state = replace(state, base=zero, adam=fresh)
    if kind.adapts:
        state = replace(state, history=DistributionHistory(num_classes, config.history_capacity))
    return state


def training_offset(dist, floor: float = DEFAULT_FLOOR) -> np.ndarray:
    """Logit offset realizing the uniform-to-``dist`` adaptation during training.

    ``log dist`` shifted so its largest entry is zero; the shift is constant
    over classes and leaves the softmax unchanged, and a uniform ``dist``
    yields an exactly-zero offset.
    """
    logp = np.log(np.maximum(np.asarray(dist, dtype=np.float64), floor))
    return logp - logp.max()


def _check_batch(state: LearnerState, batch: TimeStepBatch) -> None:
    if len(batch) == 0:
        raise ValueError("cannot observe an empty batch")
    if batch.t != state.t + 1:
        raise ValueError(f"expected batch for step {state.t + 1}, got step {batch.t}")
    if batch.features.shape[1] != state.feature_dim:
        raise ValueError("batch feature dimension does not match learner")


def observe(state: LearnerState, batch: TimeStepBatch) -> LearnerState:
    """Learn from the training data of the next time step."""
    _check_batch(state, batch)
    kind, cfg, t = state.kind, state.config, batch.t
    zero_offset = np.zeros(state.num_classes)
    step_seed = [state.seed, t]

    def resume_adam(adam: AdamState, model: LinearModel) -> AdamState:
        return AdamState.zeros_like(model) if cfg.train.reset_adam_each_step else adam

    if kind is MethodKind.ENSEMBLE:
        m = t % cfg.ensemble_size
        model, adam = state.members[m]
        model, adam = train_one_step(
            model, resume_adam(adam, model), batch, zero_offset, cfg.train, step_seed
        )
        members = state.members[:m] + ((model, adam),) + state.members[m + 1 :]
        updates = list(state.member_updates)
        updates[m] += 1
        return replace(state, t=t, members=members, member_updates=tuple(updates))

    if kind is MethodKind.RESTART:
        zero = LinearModel.zeros(state.feature_dim, state.num_classes)
        # seed independent of t: the result depends on the batch contents only
        model, adam = train_one_step(
            zero, AdamState.zeros_like(zero), batch, zero_offset, cfg.train, [state.seed]
        )
        return replace(state, t=t, base=model, adam=adam)

    if kind is MethodKind.ERM_FULL:
        retained = state.retained + (batch,)
        pooled = TimeStepBatch(
            t,
            np.concatenate([b.features for b in retained]),
            np.concatenate([b.labels for b in retained]),
        )
        zero = LinearModel.zeros(state.feature_dim, state.num_classes)
        model, adam = train_one_step(
            zero,
            AdamState.zeros_like(zero),
            pooled,
            zero_offset,
            replace(cfg.train, epochs_per_step=cfg.erm_epochs),
            step_seed,
        )
        return replace(state, t=t, base=model, adam=adam, retained=retained)

    offset = zero_offset
    history = state.history
    if kind.adapts:
        dist = empirical_distribution(batch.labels, state.num_classes)
        history = history.copy()
        history.append(dist)
        offset = training_offset(dist, cfg.floor)
    model, adam = train_one_step(
        state.base, resume_adam(state.adam, state.base), batch, offset, cfg.train, step_seed
    )
    return replace(state, t=t, base=model, adam=adam, history=history)


def adaptation_target(state: LearnerState) -> np.ndarray:
    """Class distribution the adapting methods retarget their base model to."""
    if not state.kind.adapts:
        raise ValueError(f"{state.kind} does not adapt")
    if state.t < 1:
        raise ValueError("no step observed yet")
    if state.kind is MethodKind.LIMES:
        return forecast_next(state.history)
    rng = np.random.default_rng([state.seed, state.t, 1])
    return state.history[int(rng.integers(len(state.history)))]


def predictor_for_next(state: LearnerState) -> LinearModel:
    """Model used to classify all data of step ``state.t + 1``."""
    if state.t < 1:
        raise ValueError("predictor requested before any observation")
    if state.kind is MethodKind.ENSEMBLE:
        return state.members[(state.t + 1) % state.config.ensemble_size][0]
    if state.kind.adapts:
        uniform = np.full(state.num_classes, 1.0 / state.num_classes)
        return adapt_bias(state.base, uniform, adaptation_target(state), state.config.floor)
    return state.base


# --------------------------------------------------------------------------
# checkpoints


def _config_to_dict(config: LearnerConfig) -> dict:
    out = {k: getattr(config, k) for k in ("ensemble_size", "retain_batches", "erm_epochs", "floor", "history_capacity")}
    out["train"] = dict(config.train.__dict__)
    return out


def _config_from_dict(d: dict) -> LearnerConfig:
    d = dict(d)
    return LearnerConfig(train=TrainConfig(**d.pop("train")), **d)


def save_state(state: LearnerState, directory) -> None:
    """Write ``state.json``, ``arrays.npz`` and (for adapting methods) ``history.csv``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    arrays = {}
    pairs = list(state.members) if state.kind is MethodKind.ENSEMBLE else [(state.base, state.adam)]
    adam_steps = []
    for i, (model, adam) in enumerate(pairs):
        arrays[f"weights_{i}"] = model.weights
        arrays[f"biases_{i}"] = model.biases
        for key in ("m_weights", "m_biases", "v_weights", "v_biases"):
            arrays[f"{key}_{i}"] = getattr(adam, key)
        adam_steps.append(adam.step_count)
    for i, batch in enumerate(state.retained):
        arrays[f"retained_x_{i}"] = batch.features
        arrays[f"retained_y_{i}"] = batch.labels
    np.savez(directory / "arrays.npz", **arrays)
    meta = {
        "kind": state.kind.value,
        "num_classes": state.num_classes,
        "feature_dim": state.feature_dim,
        "seed": state.seed,
        "t": state.t,
        "config": _config_to_dict(state.config),
        "adam_steps": adam_steps,
        "member_updates": list(state.member_updates),
        "retained_steps": [b.t for b in state.retained],
    }
    (directory / "state.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")
    if state.history is not None:
        state.history.to_csv(directory / "history.csv")


def load_state(directory) -> LearnerState:
    directory = Path(directory)
    meta = json.loads((directory / "state.json").read_text())
    config = _config_from_dict(meta["config"])
    kind = MethodKind(meta["kind"])
    with np.load(directory / "arrays.npz") as npz:
        arrays = {k: npz[k] for k in npz.files}
    pairs = []
    for i, steps in enumerate(meta["adam_steps"]):
        model = LinearModel(arrays[f"weights_{i}"], arrays[f"biases_{i}"])
        adam = AdamState(
            *(arrays[f"{k}_{i}"] for k in ("m_weights", "m_biases", "v_weights", "v_biases")),
            steps,
        )
        pairs.append((model, adam))
    state = LearnerState(
        kind, meta["num_classes"], meta["feature_dim"], config, meta["seed"], meta["t"]
    )
    if kind is MethodKind.ENSEMBLE:
        state = replace(state, members=tuple(pairs), member_updates=tuple(meta["member_updates"]))
    else:
        state = replace(state, base=pairs[0][0], adam=pairs[0][1])
    if kind.adapts:
        history = DistributionHistory.from_csv(directory / "history.csv", config.history_capacity)
        state = replace(state, history=history)
    retained = tuple(
        TimeStepBatch(t, arrays[f"retained_x_{i}"], arrays[f"retained_y_{i}"])
        for i, t in enumerate(meta["retained_steps"])
    )
    return replace(state, retained=retained)
