"""Minibatch training of a ConvMF model on a snapshot time series."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from ..evalbench.metrics import batch_normalized_loss
from ..evalbench.splits import Split, SplitSpec, make_split
from .model import ConvMFModel, Hyperparameters
from .optim import NonFiniteGradient, make_optimizer

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    def __init__(self, message: str, epoch: int):
        super().__init__(f"epoch {epoch}: {message}")
        self.epoch = epoch


@dataclass
class TrainReport:
    """Loss history of one training run.

    ``train_loss`` is the mean unnormalized ``||X - UV||_F^2`` per training
    frame, averaged over each epoch's minibatches. ``val_loss`` is the mean
    normalized loss on the validation frames after each epoch.
    ``best_epoch == 0`` means the initial parameters were never beaten.
    """

    rank: int
    initial_val_loss: float
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    epoch_seconds: list[float] = field(default_factory=list)
    best_epoch: int = 0
    best_val_loss: float = float("inf")
    best_params: dict | None = None
    split: Split | None = None
    n_train_frames: int = 0
    stopped_early: bool = False

    @property
    def epochs(self) -> int:
        return len(self.train_loss)

    def history_rows(self):
        yield 0, float("nan"), self.initial_val_loss, 0.0
        for i, (tl, vl, sec) in enumerate(zip(self.train_loss, self.val_loss, self.epoch_seconds), start=1):
            yield i, tl, vl, sec


def mean_validation_loss(model: ConvMFModel, frames: np.ndarray) -> float:
    u, v = model.predict(frames)
    return float(np.mean(batch_normalized_loss(frames, u, v)))


def train(
    model: ConvMFModel,
    frames: np.ndarray,
    split: SplitSpec | Split,
    hyper: Hyperparameters | None = None,
    extra_train_frames: np.ndarray | None = None,
    callback=None,
    time_budget: float | None = None,
) -> TrainReport:
    """Fit ``model`` to the training frames and restore its best-validation state.

    ``frames`` is a (T, m, n) stack (a ``TimeSeries`` works too).
    ``extra_train_frames`` are appended to the training set only; validation
    always uses frames from the series. Batch order comes from a generator
    seeded with ``hyper.seed``, so identical inputs give identical reports.
    With ``time_budget`` (seconds) training stops after the first epoch that
    ends past the budget and ``report.stopped_early`` is set.
    """
    hyper = hyper if hyper is not None else model.hyper
    hyper.validate()
    frames = np.asarray(getattr(frames, "frames", frames), dtype=np.float64)
    if frames.shape[0] < 10:
        raise ValueError(f"need at least 10 frames, got {frames.shape[0]}")
    if isinstance(split, SplitSpec):
        split = make_split(frames.shape[0], split)
    x_train = frames[split.train]
    if extra_train_frames is not None and len(extra_train_frames):
        x_train = np.concatenate([x_train, np.asarray(extra_train_frames, dtype=np.float64)])
    x_val = frames[split.validation]

    rng = np.random.default_rng(hyper.seed)
    opt = make_optimizer(hyper.optimizer, hyper.learning_rate)
    init_val = mean_validation_loss(model, x_val)
    report = TrainReport(
        rank=model.rank, initial_val_loss=init_val, best_val_loss=init_val,
        best_params=model.copy_params(), split=split, n_train_frames=x_train.shape[0],
    )
    n = x_train.shape[0]
    started = time.perf_counter()
    for epoch in range(1, hyper.epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, hyper.batch_size):
            batch = x_train[order[start : start + hyper.batch_size]]
            loss, grads = model.loss_and_grad(batch)
            if not np.isfinite(loss):
                raise TrainingDiverged(f"non-finite training loss {loss}", epoch)
            try:
                opt.step(model.params, grads)
            except NonFiniteGradient as exc:
                raise TrainingDiverged(str(exc), epoch) from exc
            total += loss * batch.shape[0]
        val = mean_validation_loss(model, x_val)
        if not np.isfinite(val):
            raise TrainingDiverged(f"non-finite validation loss {val}", epoch)
        report.train_loss.append(total / n)
        report.val_loss.append(val)
        report.epoch_seconds.append(time.perf_counter() - t0)
        if val < report.best_val_loss:
            report.best_val_loss = val
            report.best_epoch = epoch
            report.best_params = model.copy_params()
        log.debug("rank %d epoch %d train %.4e val %.4e", model.rank, epoch, total / n, val)
        if callback is not None:
            callback(epoch, report)
        if time_budget is not None and epoch < hyper.epochs and time.perf_counter() - started >= time_budget:
            report.stopped_early = True
            log.info("rank %d: time budget reached after epoch %d", model.rank, epoch)
            break
    model.params = {k: v.copy() for k, v in report.best_params.items()}
    return report
