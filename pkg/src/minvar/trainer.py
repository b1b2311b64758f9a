"""End-to-end training of the shrinkage network on historical returns.

Each training sample is a random contiguous window: N assets drawn without
replacement, n in-sample columns for the covariance estimate, and the next
m columns as the out-of-sample loss target. Windows vary in (N, n) so the
network learns the whole range of aspect ratios c = N/n instead of one
matrix size.

The last tenth of the date range is reserved for model selection. Training
windows never touch it; validation windows place their m target columns
inside it. The best model by validation loss is returned, with early
stopping on a patience counter.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CollapsedWeightsError, ConfigError, DataError
from .eigen import eigh
from .estimators import LW_FORMULA_STANDARD, LW_FORMULAS, ledoit_wolf
from .market_data import ReturnsMatrix
from .shrinkage_net import (
    AdamState,
    GradientBundle,
    ModelConfig,
    ShrinkageInput,
    ShrinkageModel,
    adam_step,
    forward,
    init_model,
    loss_and_gradients,
)

logger = logging.getLogger(__name__)

VALIDATION_FRACTION = 0.1
DEFAULT_VAL_WINDOWS = 16


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 8
    learning_rate: float = 1e-4
    n_range: tuple[int, int] = (40, 250)
    n_assets_range: tuple[int, int] = (20, 50)
    val_horizon: int = 20
    seed: int = 0
    patience: int = 10
    lw_formula: str = LW_FORMULA_STANDARD
    batches_per_epoch: int = 100
    val_windows: int = DEFAULT_VAL_WINDOWS

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError("epochs cannot be negative")
        if self.batch_size < 1:
            raise ConfigError("batch size must be at least 1")
        if self.learning_rate <= 0:
            raise ConfigError("learning rate must be positive")
        for name, lo, hi in (
            ("n_range", *self.n_range),
            ("n_assets_range", *self.n_assets_range),
        ):
            if lo < 2 or hi < lo:
                raise ConfigError(f"{name} ({lo}, {hi}) is not a valid range")
        if self.val_horizon < 1:
            raise ConfigError("validation horizon must be at least 1")
        if self.patience < 1:
            raise ConfigError("patience must be at least 1")
        if self.lw_formula not in LW_FORMULAS:
            raise ConfigError(f"unknown shrinkage formula {self.lw_formula!r}")
        if self.batches_per_epoch < 1 or self.val_windows < 1:
            raise ConfigError("batch and window counts must be positive")


@dataclass
class TrainSample:
    """One window: in-sample N x n returns plus the next m columns."""

    insample: np.ndarray
    validation: np.ndarray
    c: float

    def __post_init__(self):
        self.insample = np.asarray(self.insample, dtype=np.float64)
        self.validation = np.asarray(self.validation, dtype=np.float64)
        if self.insample.ndim != 2 or self.validation.ndim != 2:
            raise DataError("sample matrices must be two-dimensional")
        if self.insample.shape[0] != self.validation.shape[0]:
            raise DataError("in-sample and validation asset counts differ")
        if self.c <= 0:
            raise DataError("aspect ratio must be positive")


@dataclass
class EpochStats:
    epoch: int
    mean_train_loss: float
    mean_val_loss: float
    skipped_samples: int


@dataclass
class TrainResult:
    model: ShrinkageModel
    log: list[EpochStats] = field(default_factory=list)
    best_epoch: int = 0


def _split_point(n_columns: int) -> int:
    return n_columns - max(1, int(round(n_columns * VALIDATION_FRACTION)))


def _check_feasible(r: ReturnsMatrix, cfg: TrainConfig) -> int:
    n_assets, n_columns = r.returns.shape
    if cfg.n_assets_range[1] > n_assets:
        raise ConfigError(
            f"asset range up to {cfg.n_assets_range[1]} exceeds the {n_assets} available"
        )
    split = _split_point(n_columns)
    need = cfg.n_range[1] + cfg.val_horizon
    if split < need:
        raise ConfigError(
            f"training region has {split} columns, need {need} for the largest window"
        )
    return split


def _draw_sample(
    r: ReturnsMatrix, cfg: TrainConfig, rng: np.random.Generator, region: str, split: int
) -> TrainSample:
    n_total, t_total = r.returns.shape
    n = int(rng.integers(cfg.n_range[0], cfg.n_range[1] + 1))
    n_assets = int(rng.integers(cfg.n_assets_range[0], cfg.n_assets_range[1] + 1))
    assets = np.sort(rng.choice(n_total, size=n_assets, replace=False))
    m = cfg.val_horizon
    if region == "train":
        # whole window inside the training region
        lo, hi = 0, split - n - m
    else:
        # loss target columns inside the held-out region
        lo, hi = max(0, split - n), t_total - n - m
    start = int(rng.integers(lo, hi + 1)) if hi > lo else lo
    block = r.returns[assets]
    return TrainSample(
        block[:, start : start + n].copy(),
        block[:, start + n : start + n + m].copy(),
        n_assets / n,
    )


def sample_batch(
    r: ReturnsMatrix, cfg: TrainConfig, rng: np.random.Generator
) -> list[TrainSample]:
    """Draw batch_size training windows, all inside the training split."""
    split = _check_feasible(r, cfg)
    return [_draw_sample(r, cfg, rng, "train", split) for _ in range(cfg.batch_size)]


def _sample_loss_inputs(sample: TrainSample, lw_formula: str):
    estimate = ledoit_wolf(sample.insample, formula=lw_formula)
    es = eigh(estimate.matrix)
    # tiny negative eigenvalues from rounding are clipped for the input contract
    inp = ShrinkageInput(np.maximum(es.eigenvalues, 0.0), sample.c)
    return inp, es


def train_step(
    model: ShrinkageModel,
    batch: list[TrainSample],
    state: AdamState,
    cfg: TrainConfig,
) -> tuple[ShrinkageModel, AdamState, float, int]:
    """One Adam update from the mean gradient over the batch.

    Samples whose shrinkage output collapses (all-zero coefficients) are
    skipped and counted; the mean runs over the survivors. If every sample
    collapses the step is a no-op with loss NaN.
    """
    grad_sums: dict[str, np.ndarray] | None = None
    loss_sum = 0.0
    skipped = 0
    for sample in batch:
        inp, es = _sample_loss_inputs(sample, cfg.lw_formula)
        try:
            bundle = loss_and_gradients(model, inp, es, sample.validation)
        except CollapsedWeightsError:
            skipped += 1
            continue
        loss_sum += bundle.loss
        if grad_sums is None:
            grad_sums = {k: v.copy() for k, v in bundle.grads.items()}
        else:
            for k, v in bundle.grads.items():
                grad_sums[k] += v
    n_ok = len(batch) - skipped
    if n_ok == 0:
        return model, state, math.nan, skipped
    mean_grads = {k: v / n_ok for k, v in grad_sums.items()}
    model, state = adam_step(
        model, GradientBundle(loss_sum / n_ok, mean_grads), state, lr=cfg.learning_rate
    )
    return model, state, loss_sum / n_ok, skipped


def evaluate_loss(
    model: ShrinkageModel, samples: list[TrainSample], lw_formula: str
) -> float:
    """Mean forward-only loss over samples; inf if every sample collapses."""
    total = 0.0
    n_ok = 0
    for sample in samples:
        inp, es = _sample_loss_inputs(sample, lw_formula)
        eta = forward(model, inp)
        u = es.eigenvectors
        row_sums = u @ (eta * (u.T @ np.ones(u.shape[0])))
        normalizer = row_sums.sum()
        if abs(normalizer) <= 1e-12:
            continue
        h = row_sums / normalizer
        centered = sample.validation - sample.validation.mean(axis=1, keepdims=True)
        total += float(h @ (centered @ centered.T / centered.shape[1]) @ h)
        n_ok += 1
    return total / n_ok if n_ok else math.inf


def train(
    r: ReturnsMatrix,
    cfg: TrainConfig,
    model_config: ModelConfig | None = None,
) -> TrainResult:
    """Run the full training loop and return the best model by validation loss."""
    split = _check_feasible(r, cfg)
    if r.returns.shape[1] - cfg.val_horizon < split:
        raise ConfigError("held-out region is shorter than the loss horizon")
    rng = np.random.default_rng(cfg.seed)
    val_samples = [
        _draw_sample(r, cfg, rng, "validation", split) for _ in range(cfg.val_windows)
    ]
    model = init_model(model_config or ModelConfig(), seed=cfg.seed)
    if cfg.epochs == 0:
        return TrainResult(model)

    state = AdamState()
    best_model = model.copy()
    best_val = math.inf
    best_epoch = 0
    log: list[EpochStats] = []
    for epoch in range(1, cfg.epochs + 1):
        loss_sum = 0.0
        loss_batches = 0
        skipped_total = 0
        for _ in range(cfg.batches_per_epoch):
            batch = [_draw_sample(r, cfg, rng, "train", split) for _ in range(cfg.batch_size)]
            model, state, mean_loss, skipped = train_step(model, batch, state, cfg)
            skipped_total += skipped
            if math.isfinite(mean_loss):
                loss_sum += mean_loss
                loss_batches += 1
        train_loss = loss_sum / loss_batches if loss_batches else math.nan
        val_loss = evaluate_loss(model, val_samples, cfg.lw_formula)
        log.append(EpochStats(epoch, train_loss, val_loss, skipped_total))
        logger.info(
            "epoch %d: train %.3e, val %.3e, skipped %d",
            epoch, train_loss, val_loss, skipped_total,
        )
        if val_loss < best_val:
            best_val = val_loss
            best_model = model.copy()
            best_epoch = epoch
        elif epoch - best_epoch >= cfg.patience:
            break
    return TrainResult(best_model, log, best_epoch)
