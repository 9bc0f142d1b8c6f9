"""Wall-clock comparison of full SVD, truncated SVD and ConvMF inference."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass
from typing import Callable, Mapping, NamedTuple, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from ..linalg_core import svd_dense, svd_truncated

log = logging.getLogger(__name__)

TIMING_METHODS = ("convmf", "svd_basic", "svd_faster")


@dataclass(frozen=True)
class TimingConfig:
    warmup_runs: int = 3
    measured_runs: int = 11
    aggregator: str = "median"
    # optionally batch calls until one measured interval lasts this long
    min_interval_ms: float = 0.0

    def __post_init__(self):
        if self.measured_runs < 5:
            raise ValueError("measured_runs must be >= 5")
        if self.warmup_runs < 0:
            raise ValueError("warmup_runs must be >= 0")
        if self.aggregator != "median":
            raise ValueError("only the median aggregator is supported")
        if self.min_interval_ms < 0:
            raise ValueError("min_interval_ms must be >= 0")


class TimingRecord(NamedTuple):
    m: int
    n: int
    rank: int
    method: str
    wall_time_ns: float  # median time of one call
    inner_loops: int
    runs_ns: tuple[float, ...]


def clock_resolution_ns() -> float:
    return time.get_clock_info("perf_counter").resolution * 1e9


def _inner_loops(fn, resolution_ns: float, min_interval_ns: float = 0.0) -> int:
    """Calls per measurement so that one interval spans >= 100 clock ticks
    and at least ``min_interval_ns``.

    Longer intervals make rounds longer, and on a host whose speed drifts in
    episodes that lets ranks see different mixes of fast and slow periods, so
    the default keeps single calls and relies on many short rounds instead.
    """
    t0 = time.perf_counter_ns()
    fn()
    once = max(time.perf_counter_ns() - t0, 1)
    floor = 100.0 * resolution_ns
    if once < floor:
        log.info("interval %d ns below %.0f ns clock floor; batching calls", once, floor)
    return max(1, math.ceil(max(floor, min_interval_ns) / once))


def time_call(fn: Callable[[], object], cfg: TimingConfig = TimingConfig()) -> tuple[float, int, tuple[float, ...]]:
    """Median per-call time of ``fn`` in nanoseconds, the loop count and every run."""
    for _ in range(cfg.warmup_runs):
        fn()
    loops = _inner_loops(fn, clock_resolution_ns(), cfg.min_interval_ms * 1e6)
    runs = []
    for _ in range(cfg.measured_runs):
        t0 = time.perf_counter_ns()
        for _ in range(loops):
            fn()
        runs.append((time.perf_counter_ns() - t0) / loops)
    return float(np.median(runs)), loops, tuple(runs)


def timing_benchmark(
    frame: np.ndarray,
    ranks: Sequence[int],
    methods: Sequence[str] = TIMING_METHODS,
    cfg: TimingConfig = TimingConfig(),
    models: Mapping[int, object] | Callable[[int], object] | None = None,
) -> list[TimingRecord]:
    """Time the factorization of one ``m x n`` frame per (method, rank).

    Runs with BLAS limited to one thread. ``svd_basic`` is a full dense SVD
    followed by truncation; ``svd_faster`` is Lanczos bidiagonalization for
    the top ``r`` triplets; ``convmf`` is a forward pass of the rank's model,
    given as a mapping or a factory.

    Within a method, measurements are taken in rounds that visit every rank
    once (in rotating order), so slow drift of the machine's speed spreads
    evenly across ranks instead of biasing whichever rank ran first.
    """
    frame = np.asarray(frame, dtype=np.float64)
    m, n = frame.shape
    unknown = set(methods) - set(TIMING_METHODS)
    if unknown:
        raise ValueError(f"unknown timing methods {sorted(unknown)}")
    if "convmf" in methods and models is None:
        raise ValueError("convmf timing needs models")
    ranks = list(ranks)
    out = []
    with threadpool_limits(limits=1):
        for method in methods:
            fns = [_factorizer(method, frame, r, models) for r in ranks]
            for fn in fns:
                for _ in range(cfg.warmup_runs):
                    fn()
            resolution = clock_resolution_ns()
            loops = [_inner_loops(fn, resolution, cfg.min_interval_ms * 1e6) for fn in fns]
            runs: list[list[float]] = [[] for _ in ranks]
            for rnd in range(cfg.measured_runs):
                for k in np.roll(np.arange(len(ranks)), -rnd):
                    fn = fns[k]
                    t0 = time.perf_counter_ns()
                    for _ in range(loops[k]):
                        fn()
                    runs[k].append((time.perf_counter_ns() - t0) / loops[k])
            for r, lp, rs in zip(ranks, loops, runs):
                med = float(np.median(rs))
                out.append(TimingRecord(m, n, r, method, med, lp, tuple(rs)))
                log.info("%dx%d rank %d %s: %.3f ms", m, n, r, method, med / 1e6)
            del fns
    out.sort(key=lambda t: (t.rank, TIMING_METHODS.index(t.method)))
    return out


def _factorizer(method: str, frame: np.ndarray, r: int, models):
    if method == "svd_basic":
        def fn():
            res = svd_dense(frame)
            return res.left[:, :r] * res.singular_values[:r], res.right[:r]
        return fn
    if method == "svd_faster":
        return lambda: svd_truncated(frame, r)
    model = models[r] if isinstance(models, Mapping) else models(r)
    return lambda: model.forward(frame)
