"""Train on the start of a series, test on its end."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..convmf.model import ConvMFModel, Hyperparameters
from ..convmf.train import TrainReport, train
from ..vlasov_sim import PhaseSpaceGrid, init_random_smooth, run
from .records import EvalRecord
from .splits import SplitSpec, make_split
from .sweep import average_by_rank, rank_sweep

AUGMENT_FRACTION = 0.2
AUGMENT_SEED_BASE = 1000


def random_ic_frames(grid: PhaseSpaceGrid, count: int, dt: float = 0.05, evolve_steps: int = 10) -> np.ndarray:
    """``count`` frames, frame ``i`` grown from a random smooth IC seeded ``1000 + i``.

    Each IC is advanced ``evolve_steps`` solver steps so the frames carry the
    filamentation that real Vlasov snapshots have.
    """
    out = np.empty((count,) + grid.shape)
    for i in range(count):
        f0 = init_random_smooth(grid, seed=AUGMENT_SEED_BASE + i)
        out[i] = run(f0, grid, dt, evolve_steps, record_every=max(evolve_steps, 1)).frames[-1]
    return out


@dataclass
class ExtrapolationResult:
    report: TrainReport
    records: list[EvalRecord]
    boundary: int  # first frame index never seen in training
    test_frames: np.ndarray
    augmented_frames: int

    @property
    def test_loss(self) -> float:
        return average_by_rank(self.records, self.test_frames)[("convmf", self.report.rank)]


def extrapolation_experiment(
    series,
    hyper: Hyperparameters,
    with_random_augment: bool = False,
    split: SplitSpec | None = None,
    callback=None,
) -> ExtrapolationResult:
    """Sequential-split training and per-frame evaluation over the whole series.

    Every frame gets ``convmf`` and ``svd_basic`` records so the loss curve can
    be drawn across the boundary at ``ceil(0.7 T)``. Random-IC frames, when
    requested, join the training set only (20% of its size); validation and
    test frames come from the series.
    """
    frames = np.asarray(getattr(series, "frames", series), dtype=np.float64)
    split = split or SplitSpec("sequential", seed=hyper.seed, augment_random_ic=with_random_augment)
    if split.mode != "sequential":
        raise ValueError("extrapolation needs a sequential split")
    parts = make_split(frames.shape[0], split)
    boundary = math.ceil(split.train_fraction * frames.shape[0] - 1e-9)
    extra = None
    if with_random_augment:
        grid = getattr(series, "grid", None) or PhaseSpaceGrid(*frames.shape[1:])
        dt = getattr(series, "metadata", {}).get("dt_step", getattr(series, "dt", 0.05))
        extra = random_ic_frames(grid, math.ceil(AUGMENT_FRACTION * parts.train.size), dt=dt)
    model = ConvMFModel(frames.shape[1], frames.shape[2], hyper)
    report = train(model, frames, parts, hyper, extra_train_frames=extra, callback=callback)
    records = rank_sweep(frames, np.arange(frames.shape[0]), [hyper.rank], ("convmf", "svd_basic"), {hyper.rank: model})
    return ExtrapolationResult(report, records, boundary, parts.test, 0 if extra is None else extra.shape[0])
