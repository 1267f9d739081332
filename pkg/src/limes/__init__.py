"""Streaming multiclass classification under class-prior shift."""

from .forecast import DistributionHistory, empirical_distribution, forecast_next, l1_distance
from .model import LinearModel, adapt_bias, logits, posterior, predict
from .optim import AdamState, Gradient, TrainConfig, adam_step, loss_and_gradient, train_one_step
from .strategies import LearnerConfig, LearnerState, MethodKind, create, observe, predictor_for_next
from .stream import (
    GeneratorConfig,
    SplitSpec,
    StreamDataset,
    TimeStepBatch,
    bayes_posterior,
    generate_synthetic,
    load_dataset,
    save_dataset,
    split_train_eval,
    subsample_realization,
    true_prior,
)

__version__ = "0.1.0"
