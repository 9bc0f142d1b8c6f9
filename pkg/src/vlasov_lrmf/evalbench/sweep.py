"""Per-frame losses of every method across a sweep of ranks."""

from __future__ import annotations

import time
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from typing import Iterable, Mapping, Sequence

import numpy as np

from ..linalg_core import best_rank_error, svd_dense, svd_truncated
from .metrics import calculated_sigma, calculated_u, calculated_v, normalized_loss
from .records import METHODS, EvalRecord
from .splits import Split

_NEEDS_MODEL = {"convmf", "calc_u", "calc_v", "calc_sigma"}


class MissingCheckpoint(LookupError):
    def __init__(self, rank: int, available: Iterable[int]):
        self.rank = rank
        self.available = sorted(available)
        super().__init__(f"no ConvMF checkpoint for rank {rank}; available ranks: {self.available or 'none'}")


def _frames_of(series) -> np.ndarray:
    return np.asarray(getattr(series, "frames", series), dtype=np.float64)


def _evaluate_frame(idx, x, ranks, methods, models):
    out = []
    needs_svd = any(m.startswith("svd") for m in methods)
    if "svd_basic" in methods:
        t0 = time.perf_counter_ns()
        dense = svd_dense(x)
        basic_ns = time.perf_counter_ns() - t0
    elif needs_svd:
        dense = svd_dense(x)
    xnorm = np.sqrt(np.einsum("ij,ij->", x, x))
    for r in ranks:
        if "svd_basic" in methods:
            out.append(EvalRecord(idx, r, "svd_basic", best_rank_error(dense.singular_values, r, xnorm), basic_ns))
        if "svd_faster" in methods:
            t0 = time.perf_counter_ns()
            trunc = svd_truncated(x, r)
            ns = time.perf_counter_ns() - t0
            u = trunc.left * trunc.singular_values
            out.append(EvalRecord(idx, r, "svd_faster", normalized_loss(x, u, trunc.right), ns))
        if not _NEEDS_MODEL & set(methods):
            continue
        model = models[r]
        t0 = time.perf_counter_ns()
        u, v = model.forward(x)
        fwd_ns = time.perf_counter_ns() - t0
        if "convmf" in methods:
            out.append(EvalRecord(idx, r, "convmf", normalized_loss(x, u, v), fwd_ns))
        for name, fn, args in (
            ("calc_u", calculated_u, (x, v)),
            ("calc_v", calculated_v, (x, u)),
            ("calc_sigma", calculated_sigma, (x, u, v)),
        ):
            if name in methods:
                t0 = time.perf_counter_ns()
                rep = fn(*args)
                ns = fwd_ns + time.perf_counter_ns() - t0
                out.append(EvalRecord(idx, r, name, rep.loss, ns, rep.full_rank))
    return out


def rank_sweep(
    series,
    split: Split | Sequence[int],
    ranks: Sequence[int],
    methods: Sequence[str] = METHODS,
    models: Mapping[int, object] | None = None,
    workers: int = 1,
) -> list[EvalRecord]:
    """Evaluate every (frame, rank, method) over the held-out frames.

    ``split`` is a :class:`Split` (its validation and test frames are used)
    or an explicit index list. ``models`` maps rank to a ConvMF model and is
    only needed for ``convmf`` and the ``calc_*`` methods. ``svd_basic``
    factors each frame once and truncates for every rank, so its wall time is
    shared across ranks. Records come back sorted by frame, rank and method.
    """
    frames = _frames_of(series)
    unknown = set(methods) - set(METHODS)
    if unknown:
        raise ValueError(f"unknown methods {sorted(unknown)}; choose from {METHODS}")
    if not ranks:
        raise ValueError("rank list is empty")
    models = models or {}
    if _NEEDS_MODEL & set(methods):
        for r in ranks:
            if r not in models:
                raise MissingCheckpoint(r, models)
    idx = split.holdout if isinstance(split, Split) else np.asarray(split, dtype=int)
    idx = np.sort(idx)
    ranks = sorted(set(int(r) for r in ranks))

    def job(i):
        return _evaluate_frame(int(i), frames[i], ranks, methods, models)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(job, idx))
    else:
        chunks = [job(i) for i in idx]
    records = [rec for chunk in chunks for rec in chunk]
    records.sort(key=lambda r: (r.frame_index, r.rank, METHODS.index(r.method)))
    return records


def average_by_rank(records: Iterable[EvalRecord], frames: Iterable[int] | None = None) -> dict[tuple[str, int], float]:
    """Mean scaled loss per ``(method, rank)``, optionally restricted to ``frames``."""
    keep = None if frames is None else set(int(f) for f in frames)
    acc: dict[tuple[str, int], list[float]] = defaultdict(list)
    for r in records:
        if keep is None or r.frame_index in keep:
            acc[(r.method, r.rank)].append(r.scaled_loss)
    return {k: float(np.mean(v)) for k, v in sorted(acc.items())}


def loss_series(records: Iterable[EvalRecord], method: str, rank: int) -> tuple[np.ndarray, np.ndarray]:
    """Frame indices and losses of one method at one rank, in time order."""
    sel = sorted((r.frame_index, r.scaled_loss) for r in records if r.method == method and r.rank == rank)
    if not sel:
        return np.array([], dtype=int), np.array([])
    idx, loss = zip(*sel)
    return np.array(idx), np.array(loss)


def loss_histogram(records: Iterable[EvalRecord], rank: int, bins: int = 50, method: str | None = None):
    """Equal-width histogram of per-frame losses over ``[min, max]``.

    Returns ``(edges, counts)``. ``method`` narrows the selection; without it
    every record at ``rank`` is counted.
    """
    losses = [r.scaled_loss for r in records if r.rank == rank and (method is None or r.method == method)]
    if not losses:
        raise ValueError(f"no records at rank {rank}" + (f" for method {method}" if method else ""))
    if bins < 1:
        raise ValueError("bins must be >= 1")
    counts, edges = np.histogram(np.asarray(losses), bins=bins)
    return edges, counts
