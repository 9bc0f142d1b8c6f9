"""Train / validation / test partitions of a frame index range."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


@dataclass(frozen=True)
class SplitSpec:
    """``random`` shuffles frames before cutting (interpolation protocol);
    ``sequential`` keeps time order (extrapolation protocol)."""

    mode: str = "random"
    train_fraction: float = 0.7
    seed: int = 0
    augment_random_ic: bool = False

    def __post_init__(self):
        if self.mode not in ("random", "sequential"):
            raise ValueError(f"split mode must be 'random' or 'sequential', got {self.mode!r}")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie strictly between 0 and 1")

    @classmethod
    def parse(cls, text: str, seed: int = 0, augment_random_ic: bool = False) -> "SplitSpec":
        """``random70`` / ``sequential70`` style names."""
        for mode in ("random", "sequential"):
            if text.startswith(mode):
                pct = text[len(mode):] or "70"
                return cls(mode, int(pct) / 100.0, seed, augment_random_ic)
        raise ValueError(f"unrecognized split {text!r}; expected e.g. random70 or sequential70")


class Split(NamedTuple):
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray

    @property
    def holdout(self) -> np.ndarray:
        return np.sort(np.concatenate([self.validation, self.test]))


def make_split(t: int, spec: SplitSpec) -> Split:
    """Partition ``range(t)``.

    The first ``ceil(train_fraction * t)`` positions (after a seeded shuffle in
    random mode) are training frames. The remainder is split validation first,
    with validation getting the smaller half when the count is odd.
    Index arrays are returned sorted.
    """
    if t < 10:
        raise ValueError(f"need at least 10 frames to split, got {t}")
    n_train = math.ceil(spec.train_fraction * t - 1e-9)
    rest = t - n_train
    n_val = rest // 2
    if n_train < 1 or n_val < 1 or rest - n_val < 1:
        raise ValueError(f"{t} frames cannot populate train/validation/test at fraction {spec.train_fraction}")
    order = np.arange(t)
    if spec.mode == "random":
        order = np.random.default_rng(spec.seed).permutation(t)
    train = np.sort(order[:n_train])
    val = np.sort(order[n_train : n_train + n_val])
    test = np.sort(order[n_train + n_val :])
    return Split(train, val, test)
