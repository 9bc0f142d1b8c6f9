import csv
import json
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vlasov_lrmf.convmf import build_convmf
from vlasov_lrmf.evalbench import (
    METHODS,
    DegenerateInput,
    EvalRecord,
    MissingCheckpoint,
    SplitSpec,
    TimingConfig,
    average_by_rank,
    calculated_sigma,
    calculated_u,
    calculated_v,
    loss_histogram,
    make_split,
    normalized_loss,
    rank_sweep,
    read_histogram_csv,
    read_records_csv,
    svd_loss,
    timing_benchmark,
    write_histogram_csv,
    write_manifest,
    write_records_csv,
)
from vlasov_lrmf.evalbench.extrapolation import extrapolation_experiment, random_ic_frames
from vlasov_lrmf.evalbench.parity import retry_schedule
from vlasov_lrmf.evalbench.records import RECORD_HEADER
from vlasov_lrmf.evalbench.sweep import loss_series
from vlasov_lrmf.evalbench.timing import _inner_loops, time_call
from vlasov_lrmf.convmf import Hyperparameters
from vlasov_lrmf.vlasov_sim import PhaseSpaceGrid, total_mass

from test_convmf_model import tiny_hyper


# -- losses -------------------------------------------------------------------

def test_normalized_loss_hand_example():
    x = np.array([[1.0, 2.0], [3.0, 4.0]])
    u = np.array([[1.0], [3.0]])
    v = np.array([[1.0, 2.0]])
    # residual [[0, 0], [0, -2]] against ||X||^2 = 30
    assert normalized_loss(x, u, v) == pytest.approx(4.0 / 30.0, rel=1e-15)


def test_zero_factors_give_unit_loss(rng):
    x = rng.standard_normal((6, 9))
    assert normalized_loss(x, np.zeros((6, 2)), np.zeros((2, 9))) == 1.0


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-3, 1e3), st.integers(0, 2**31))
def test_loss_is_scale_invariant(c, seed):
    rng = np.random.default_rng(seed)
    x, u, v = rng.standard_normal((5, 7)), rng.standard_normal((5, 2)), rng.standard_normal((2, 7))
    assert normalized_loss(c * x, c * u, v) == pytest.approx(normalized_loss(x, u, v), rel=1e-12)


def test_zero_frame_is_degenerate():
    with pytest.raises(DegenerateInput):
        normalized_loss(np.zeros((3, 3)), np.ones((3, 1)), np.ones((1, 3)))


def test_factor_shape_mismatch():
    with pytest.raises(ValueError, match="shapes"):
        normalized_loss(np.ones((3, 4)), np.ones((3, 2)), np.ones((1, 4)))


def test_svd_loss_matches_singular_value_tail(rng):
    x = rng.standard_normal((12, 20))
    s = np.linalg.svd(x, compute_uv=False)
    for r in (0, 3, 12):
        assert svd_loss(x, r) == pytest.approx(np.sum(s[r:] ** 2) / np.sum(s**2), abs=1e-14)


def test_calculated_factors_solve_normal_equations(rng):
    x = rng.standard_normal((10, 15))
    u, v = rng.standard_normal((10, 3)), rng.standard_normal((3, 15))
    # independent oracle: explicit normal-equation solutions
    v_opt = np.linalg.solve(u.T @ u, u.T @ x)
    u_opt = np.linalg.solve(v @ v.T, v @ x.T).T
    s_opt = np.linalg.solve(u.T @ u, u.T @ x @ v.T) @ np.linalg.inv(v @ v.T)
    np.testing.assert_allclose(calculated_v(x, u).factor, v_opt, atol=1e-10)
    np.testing.assert_allclose(calculated_u(x, v).factor, u_opt, atol=1e-10)
    np.testing.assert_allclose(calculated_sigma(x, u, v).factor, s_opt, atol=1e-10)


def test_exact_factors_repair_to_zero(rng):
    u, v = rng.standard_normal((8, 2)), rng.standard_normal((2, 11))
    x = u @ v
    for rep in (calculated_u(x, v), calculated_v(x, u), calculated_sigma(x, u, v)):
        assert rep.loss < 1e-25 and rep.full_rank


def test_rank_deficient_factor_is_flagged(rng):
    x = rng.standard_normal((8, 11))
    u = np.repeat(rng.standard_normal((8, 1)), 2, axis=1)
    rep = calculated_v(x, u)
    assert not rep.full_rank and np.isfinite(rep.loss)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 5))
def test_dominance_chain(seed, r):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((9, 13))
    u, v = rng.standard_normal((9, r)), rng.standard_normal((r, 13))
    net, best = normalized_loss(x, u, v), svd_loss(x, r)
    for rep in (calculated_u(x, v), calculated_v(x, u), calculated_sigma(x, u, v)):
        assert best <= rep.loss + 1e-12
        assert rep.loss <= net + 1e-12
    # fixing only the core is the most constrained repair
    assert calculated_u(x, v).loss <= calculated_sigma(x, u, v).loss + 1e-12
    assert calculated_v(x, u).loss <= calculated_sigma(x, u, v).loss + 1e-12


# -- splits -------------------------------------------------------------------

@settings(max_examples=80, deadline=None)
@given(st.integers(10, 400), st.sampled_from(["random", "sequential"]), st.integers(0, 99), st.sampled_from([0.5, 0.7, 0.8]))
def test_split_partitions_frames(t, mode, seed, frac):
    s = make_split(t, SplitSpec(mode, frac, seed))
    joined = np.concatenate([s.train, s.validation, s.test])
    assert sorted(joined) == list(range(t))
    assert s.train.size == int(np.ceil(frac * t - 1e-9))
    assert 0 <= s.test.size - s.validation.size <= 1
    assert make_split(t, SplitSpec(mode, frac, seed)).train.tolist() == s.train.tolist()


def test_sequential_split_of_ten():
    s = make_split(10, SplitSpec("sequential"))
    assert s.train.tolist() == list(range(7))
    assert s.validation.tolist() == [7]
    assert s.test.tolist() == [8, 9]


def test_split_rejects_short_series_and_bad_names():
    with pytest.raises(ValueError, match="at least 10"):
        make_split(9, SplitSpec())
    with pytest.raises(ValueError):
        SplitSpec.parse("shuffled70")
    assert SplitSpec.parse("sequential80").train_fraction == 0.8


# -- sweeps -------------------------------------------------------------------

@pytest.fixture(scope="module")
def sweep_setup():
    from vlasov_lrmf.vlasov_sim import init_landau_strong, run

    g = PhaseSpaceGrid(16, 32)
    series = run(init_landau_strong(g), g, 0.1, 60, record_every=3)
    models = {r: build_convmf(16, 32, tiny_hyper(rank=r, seed=r)) for r in (2, 3, 5)}
    split = make_split(len(series), SplitSpec())
    return series, models, split, rank_sweep(series, split, [2, 3, 5], METHODS, models)


def test_sweep_covers_holdout_and_methods(sweep_setup):
    series, models, split, recs = sweep_setup
    assert len(recs) == split.holdout.size * 3 * len(METHODS)
    assert sorted({r.frame_index for r in recs}) == split.holdout.tolist()
    keys = [(r.frame_index, r.rank, METHODS.index(r.method)) for r in recs]
    assert keys == sorted(keys)


def test_sweep_svd_losses_fall_with_rank(sweep_setup):
    _, _, _, recs = sweep_setup
    for method in ("svd_basic", "svd_faster"):
        by = {(r.frame_index, r.rank): r.scaled_loss for r in recs if r.method == method}
        for f in {k[0] for k in by}:
            assert by[(f, 2)] + 1e-12 >= by[(f, 3)] and by[(f, 3)] + 1e-12 >= by[(f, 5)]


def test_sweep_truncated_agrees_with_dense(sweep_setup):
    _, _, _, recs = sweep_setup
    basic = {(r.frame_index, r.rank): r.scaled_loss for r in recs if r.method == "svd_basic"}
    for r in recs:
        if r.method == "svd_faster":
            assert r.scaled_loss == pytest.approx(basic[(r.frame_index, r.rank)], abs=1e-8)


def test_sweep_dominance_on_every_frame(sweep_setup):
    _, _, _, recs = sweep_setup
    by = {(r.frame_index, r.rank, r.method): r.scaled_loss for r in recs}
    for (f, r, m), loss in by.items():
        if m.startswith("calc"):
            assert by[(f, r, "svd_basic")] <= loss + 1e-12 <= by[(f, r, "convmf")] + 2e-12


def test_sweep_threads_match_serial(sweep_setup):
    series, models, split, recs = sweep_setup
    par = rank_sweep(series, split, [2, 3, 5], METHODS, models, workers=3)
    assert [(r.frame_index, r.rank, r.method, r.scaled_loss) for r in par] == [
        (r.frame_index, r.rank, r.method, r.scaled_loss) for r in recs
    ]


def test_missing_checkpoint_lists_available(sweep_setup):
    series, models, split, _ = sweep_setup
    with pytest.raises(MissingCheckpoint, match=r"rank 7; available ranks: \[2, 3, 5\]") as err:
        rank_sweep(series, split, [7], ("convmf",), models)
    assert err.value.rank == 7
    # SVD-only sweeps need no model
    assert rank_sweep(series, split, [7], ("svd_basic",))


def test_sweep_rejects_unknown_method(sweep_setup):
    series, _, split, _ = sweep_setup
    with pytest.raises(ValueError, match="unknown"):
        rank_sweep(series, split, [2], ("pca",))


def test_average_and_series(sweep_setup):
    _, _, split, recs = sweep_setup
    avg = average_by_rank(recs, split.test)
    manual = np.mean([r.scaled_loss for r in recs if r.method == "convmf" and r.rank == 3 and r.frame_index in set(split.test)])
    assert avg[("convmf", 3)] == pytest.approx(manual, rel=1e-15)
    idx, loss = loss_series(recs, "svd_basic", 5)
    assert idx.tolist() == split.holdout.tolist() and loss.size == idx.size


def test_histogram_counts(sweep_setup):
    _, _, split, recs = sweep_setup
    edges, counts = loss_histogram(recs, 3, bins=7, method="convmf")
    assert edges.size == 8 and counts.sum() == split.holdout.size
    _, all_counts = loss_histogram(recs, 3, bins=7)
    assert all_counts.sum() == split.holdout.size * len(METHODS)
    with pytest.raises(ValueError, match="no records"):
        loss_histogram(recs, 99)


# -- files --------------------------------------------------------------------

def test_records_csv_round_trip_is_exact(tmp_path, rng):
    recs = [
        EvalRecord(int(f), int(r), m, float(rng.random() * 10.0 ** rng.integers(-17, 2)), int(rng.integers(1, 10**9)))
        for f in (3, 1) for r in (5, 2) for m in METHODS
    ]
    path = tmp_path / "r.csv"
    write_records_csv(path, recs)
    with open(path, newline="") as fh:
        assert next(csv.reader(fh)) == list(RECORD_HEADER)
    back = read_records_csv(path)
    assert [(b.frame_index, b.rank, b.method) for b in back] == sorted(
        [(r.frame_index, r.rank, r.method) for r in recs], key=lambda k: (k[0], k[1], METHODS.index(k[2]))
    )
    orig = {(r.frame_index, r.rank, r.method): (r.scaled_loss, r.wall_time_ns) for r in recs}
    for b in back:
        assert (b.scaled_loss, b.wall_time_ns) == orig[(b.frame_index, b.rank, b.method)]


def test_histogram_csv_round_trip(tmp_path, rng):
    counts, edges = np.histogram(rng.random(100), bins=9)
    write_histogram_csv(tmp_path / "h.csv", edges, counts)
    e2, c2 = read_histogram_csv(tmp_path / "h.csv")
    assert np.array_equal(e2, edges) and np.array_equal(c2, counts)


def test_manifest_contents(tmp_path):
    write_manifest(tmp_path / "m.json", "evaluate", {"ranks": [5]}, {"seed": 0}, ["records.csv"])
    data = json.loads((tmp_path / "m.json").read_text())
    assert data["command"] == "evaluate" and data["seeds"] == {"seed": 0}
    assert data["outputs"] == ["records.csv"] and data["version"]
    assert "||X - approx||_F^2" in data["loss_convention"]


# -- timing -------------------------------------------------------------------

def test_timing_config_validation():
    with pytest.raises(ValueError, match=">= 5"):
        TimingConfig(measured_runs=4)
    with pytest.raises(ValueError):
        TimingConfig(aggregator="mean")


def test_inner_loops_reach_minimum_interval():
    # a 1 ms call needs 10 repetitions to fill a 10 ms interval
    def one_ms():
        t0 = time.perf_counter_ns()
        while time.perf_counter_ns() - t0 < 1_000_000:
            pass

    assert 9 <= _inner_loops(one_ms, 1.0, 10e6) <= 10
    assert _inner_loops(one_ms, 1.0, 0.0) == 1
    with pytest.raises(ValueError):
        TimingConfig(min_interval_ms=-1)


def test_time_call_batches_fast_calls():
    median, loops, runs = time_call(lambda: None, TimingConfig(warmup_runs=1, measured_runs=5))
    assert len(runs) == 5 and loops >= 1 and median >= 0


def test_timing_benchmark_records(rng):
    frame = rng.random((16, 32))
    models = {r: build_convmf(16, 32, tiny_hyper(rank=r)) for r in (2, 4)}
    recs = timing_benchmark(frame, [4, 2], cfg=TimingConfig(1, 5), models=models)
    assert [(t.rank, t.method) for t in recs] == [
        (2, "convmf"), (2, "svd_basic"), (2, "svd_faster"), (4, "convmf"), (4, "svd_basic"), (4, "svd_faster")
    ]
    assert all(t.m == 16 and t.n == 32 and len(t.runs_ns) == 5 and t.wall_time_ns > 0 for t in recs)
    # a factory works in place of a mapping
    assert timing_benchmark(frame, [3], ("convmf",), TimingConfig(0, 5), lambda r: build_convmf(16, 32, tiny_hyper(rank=r)))
    with pytest.raises(ValueError, match="needs models"):
        timing_benchmark(frame, [2], ("convmf",))


# -- extrapolation and parity -------------------------------------------------

def test_random_ic_frames_are_seeded_and_positive_mass():
    g = PhaseSpaceGrid(16, 32)
    a, b = random_ic_frames(g, 3, evolve_steps=2), random_ic_frames(g, 3, evolve_steps=2)
    assert np.array_equal(a, b)
    assert not np.array_equal(a[0], a[1])
    assert all(total_mass(f, g) > 0 for f in a)


def test_extrapolation_boundary_and_records(small_series):
    hp = tiny_hyper(epochs=1)
    res = extrapolation_experiment(small_series, hp)
    t = len(small_series)
    assert res.boundary == int(np.ceil(0.7 * t))
    assert res.test_frames.min() > res.boundary - 1
    assert len(res.records) == 2 * t and np.isfinite(res.test_loss)
    aug = extrapolation_experiment(small_series, hp, with_random_augment=True)
    assert aug.augmented_frames == int(np.ceil(0.2 * res.report.split.train.size))
    with pytest.raises(ValueError, match="sequential"):
        extrapolation_experiment(small_series, hp, split=SplitSpec("random"))


def test_retry_schedule_starts_from_defaults():
    base = Hyperparameters(rank=14)
    plan = retry_schedule(base)
    assert plan[0] == base
    pairs = [(h.seed, h.learning_rate) for h in plan]
    assert len(set(pairs)) == len(pairs) == 6
    assert {lr for _, lr in pairs} == {1e-3, 5e-4, 1e-4}
    assert all(h.rank == 14 and h.epochs == base.epochs for h in plan)
