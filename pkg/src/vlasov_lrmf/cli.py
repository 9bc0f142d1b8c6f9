"""Command-line front end: ``vlasov-lrmf {simulate,train,evaluate,benchmark,export}``.

Each subcommand reads optional defaults from an INI file (``--config``), in a
section named after the command; flags given on the command line win. Every
command writes a JSON manifest next to its outputs and removes whatever it
wrote if it fails part way.
"""

from __future__ import annotations

import argparse
import configparser
import logging
import math
import os
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path

import numpy as np

from .convmf.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .convmf.model import ConvMFModel, Hyperparameters, build_convmf
from .convmf.train import TrainingDiverged, train
from .evalbench.extrapolation import AUGMENT_FRACTION, random_ic_frames
from .evalbench.records import (
    METHODS,
    write_histogram_csv,
    write_manifest,
    write_records_csv,
    write_rows_csv,
)
from .evalbench.splits import SplitSpec, make_split
from .evalbench.sweep import MissingCheckpoint, average_by_rank, loss_histogram, rank_sweep
from .evalbench.timing import TIMING_METHODS, TimingConfig, timing_benchmark
from .vlasov_sim import (
    INITIAL_CONDITIONS,
    PhaseSpaceGrid,
    SimulationError,
    VptsFormatError,
    init_landau_strong,
    read_series,
    run,
    total_mass,
    write_series,
    init_random_smooth,
)

log = logging.getLogger("vlasov_lrmf")

CHECKPOINT_PATTERN = re.compile(r"convmf_rank(\d+)\.cmf$")


class CommandError(RuntimeError):
    """A failure reported to the user as ``error: ...`` with exit status 1."""


def worker_count(requested: int | None = None) -> int:
    """Worker pool size, capped by ``LRMF_THREADS`` when set."""
    cap = os.environ.get("LRMF_THREADS")
    n = requested or 1
    if cap:
        try:
            n = min(n, max(1, int(cap))) if requested else max(1, int(cap))
        except ValueError as exc:
            raise CommandError(f"LRMF_THREADS must be an integer, got {cap!r}") from exc
    return n


def int_list(text: str) -> list[int]:
    try:
        vals = [int(t) for t in str(text).replace(" ", "").split(",") if t]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc
    if not vals:
        raise argparse.ArgumentTypeError("list must not be empty")
    return vals


def str_list(text: str) -> list[str]:
    return [t for t in str(text).replace(" ", "").split(",") if t]


def size_list(text: str) -> list[tuple[int, int]]:
    out = []
    for item in str_list(text):
        m = re.fullmatch(r"(\d+)x(\d+)", item)
        if not m:
            raise argparse.ArgumentTypeError(f"sizes look like 64x128, got {item!r}")
        out.append((int(m.group(1)), int(m.group(2))))
    return out


def _bool(text) -> bool:
    return str(text).strip().lower() in ("1", "true", "yes", "on")


class Outputs:
    """Files written by one command, deleted again if the command fails."""

    def __init__(self):
        self.paths: list[Path] = []

    def add(self, path) -> Path:
        path = Path(path)
        self.paths.append(path)
        return path

    def cleanup(self):
        for p in reversed(self.paths):
            try:
                p.unlink()
            except FileNotFoundError:
                pass


@contextmanager
def _tracked():
    out = Outputs()
    try:
        yield out
    except BaseException:
        out.cleanup()
        raise


def _read_series(path):
    if not Path(path).exists():
        raise CommandError(f"data file {path} does not exist")
    try:
        return read_series(path)
    except VptsFormatError as exc:
        raise CommandError(str(exc)) from exc


def _config_dict(args, skip=("func", "config", "command", "verbose")) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


# ----------------------------------------------------------------------------
# simulate

def cmd_simulate(args) -> int:
    grid = PhaseSpaceGrid(args.nx, args.nv)
    if args.ic == "random-smooth":
        f0 = init_random_smooth(grid, seed=args.seed)
    else:
        f0 = INITIAL_CONDITIONS[args.ic](grid)
    print(f"seed: {args.seed}")
    try:
        series = run(f0, grid, args.dt, args.steps, record_every=args.record_every, ic_name=args.ic)
    except SimulationError as exc:
        raise CommandError(f"solver failed: {exc}") from exc
    mass = np.array([total_mass(f, grid) for f in series.frames])
    drift = float(np.max(np.abs(mass - mass[0])) / abs(mass[0]))
    out = Path(args.out)
    with _tracked() as files:
        write_series(files.add(out), series)
        write_manifest(files.add(out.with_name(out.name + ".manifest.json")), "simulate", _config_dict(args),
                       {"seed": args.seed}, [out.name])
    print(f"frames: {len(series)}")
    print(f"relative mass drift: {drift:.3e}")
    print(f"final field energy: {series.field_energy[-1]:.6e}")
    return 0


# ----------------------------------------------------------------------------
# train

def _hyper_from_args(args, rank: int) -> Hyperparameters:
    hp = Hyperparameters(rank=rank, seed=args.seed)
    for key in ("activation", "optimizer", "learning_rate", "epochs", "batch_size"):
        val = getattr(args, key, None)
        if val is not None:
            hp = replace(hp, **{key: val})
    hp.validate()
    return hp


def cmd_train(args) -> int:
    series = _read_series(args.data)
    spec = SplitSpec.parse(args.split, seed=args.seed, augment_random_ic=args.augment_random_ic)
    split = make_split(len(series), spec)
    m, n = series.grid.shape
    extra = None
    if args.augment_random_ic:
        count = math.ceil(AUGMENT_FRACTION * split.train.size)
        extra = random_ic_frames(series.grid, count)
        print(f"augmenting training set with {count} random-IC frames (seeds 1000..{999 + count})")
    print(f"seed: {args.seed}")
    print(f"split: {spec.mode}, train {split.train.size}, validation {split.validation.size}, test {split.test.size}")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def fit(rank):
        hp = _hyper_from_args(args, rank)
        for ext in hp.extensions(m, n):
            log.warning("rank %d: %s is outside the tested hyperparameter grid", rank, ext)
        model = ConvMFModel(m, n, hp)
        try:
            report = train(model, series, split, hp, extra_train_frames=extra)
        except TrainingDiverged as exc:
            raise CommandError(f"rank {rank} diverged at epoch {exc.epoch}: {exc}") from exc
        return rank, model, report

    with _tracked() as files:
        with ThreadPoolExecutor(max_workers=worker_count(args.workers)) as pool:
            results = sorted(pool.map(fit, args.ranks), key=lambda t: t[0])
        names = []
        for rank, model, report in results:
            ck = files.add(out_dir / f"convmf_rank{rank}.cmf")
            save_checkpoint(ck, model)
            hist = files.add(out_dir / f"train_rank{rank}.csv")
            write_rows_csv(hist, ("epoch", "train_loss", "val_loss", "epoch_seconds"), report.history_rows())
            names += [ck.name, hist.name]
            print(
                f"rank {rank}: {model.parameter_count} parameters, best epoch {report.best_epoch}, "
                f"validation loss {report.best_val_loss:.4e} -> {ck}"
            )
        write_manifest(files.add(out_dir / "train_manifest.json"), "train", _config_dict(args),
                       {"seed": args.seed, "augment_seeds": "1000+i" if extra is not None else None}, names)
    return 0


# ----------------------------------------------------------------------------
# evaluate

def available_checkpoints(directory) -> dict[int, Path]:
    directory = Path(directory)
    if not directory.is_dir():
        return {}
    found = {}
    for p in directory.iterdir():
        m = CHECKPOINT_PATTERN.search(p.name)
        if m:
            found[int(m.group(1))] = p
    return dict(sorted(found.items()))


def _load_models(directory, ranks, shape):
    avail = available_checkpoints(directory) if directory else {}
    models = {}
    for r in ranks:
        if r not in avail:
            raise CommandError(str(MissingCheckpoint(r, avail)))
        try:
            model = load_checkpoint(avail[r], rank=r)
        except CheckpointError as exc:
            raise CommandError(str(exc)) from exc
        if model.input_shape != shape:
            raise CommandError(f"{avail[r]} expects {model.input_shape} frames, data has {shape}")
        models[r] = model
    return models


def cmd_evaluate(args) -> int:
    series = _read_series(args.data)
    methods = args.methods
    bad = set(methods) - set(METHODS)
    if bad:
        raise CommandError(f"unknown methods {sorted(bad)}; choose from {', '.join(METHODS)}")
    needs_model = bool({"convmf", "calc_u", "calc_v", "calc_sigma"} & set(methods))
    ranks = args.ranks
    if ranks is None:
        ranks = list(available_checkpoints(args.checkpoint_dir)) if needs_model and args.checkpoint_dir else []
        # the default sweep keeps the ranks the frame size admits
        ranks = ranks or [r for r in range(5, 31, 5) if r < min(series.grid.shape)]
    models = _load_models(args.checkpoint_dir, ranks, series.grid.shape) if needs_model else {}
    split = make_split(len(series), SplitSpec.parse(args.split, seed=args.seed))
    print(f"seed: {args.seed}")
    print(f"evaluating {split.holdout.size} held-out frames, ranks {ranks}, methods {','.join(methods)}")
    records = rank_sweep(series, split, ranks, methods, models, workers=worker_count(args.workers))

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with _tracked() as files:
        write_records_csv(files.add(out_dir / "records.csv"), records)
        rows = []
        for subset, idx in (("validation", split.validation), ("test", split.test), ("holdout", split.holdout)):
            for (method, rank), mean in average_by_rank(records, idx).items():
                rows.append((subset, method, rank, mean, int(idx.size)))
        write_rows_csv(files.add(out_dir / "averages.csv"), ("subset", "method", "rank", "mean_scaled_loss", "frames"), rows)
        for method in methods:
            for r in ranks:
                edges, counts = loss_histogram(records, r, args.bins, method=method)
                write_histogram_csv(files.add(out_dir / f"histogram_{method}_rank{r}.csv"), edges, counts)
        rank_deficient = sum(1 for rec in records if not rec.full_rank)
        if rank_deficient:
            log.warning("%d least-squares repairs had a rank-deficient fixed factor", rank_deficient)
        write_manifest(files.add(out_dir / "evaluate_manifest.json"), "evaluate", _config_dict(args),
                       {"seed": args.seed}, [p.name for p in files.paths])
    for subset, method, rank, mean, _ in rows:
        if subset == "test":
            print(f"test  {method:<11s} rank {rank:>3d}  mean scaled loss {mean:.4e}")
    return 0


# ----------------------------------------------------------------------------
# benchmark

def _benchmark_frame(series, shape, steps):
    if series is not None and series.grid.shape == shape:
        return series.frames[-1]
    grid = PhaseSpaceGrid(*shape)
    return run(init_landau_strong(grid), grid, 0.05, steps, record_every=max(steps, 1)).frames[-1]


def cmd_benchmark(args) -> int:
    methods = args.methods
    bad = set(methods) - set(TIMING_METHODS)
    if bad:
        raise CommandError(f"unknown timing methods {sorted(bad)}; choose from {', '.join(TIMING_METHODS)}")
    series = _read_series(args.data) if args.data else None
    cfg = TimingConfig(args.warmup_runs, args.measured_runs, min_interval_ms=args.min_interval_ms)
    print(f"seed: {args.seed}")
    print("note: timings assume an otherwise idle machine; BLAS is limited to one thread")
    rows, weights = [], {}
    for shape in args.sizes:
        frame = _benchmark_frame(series, shape, args.frame_steps)
        models = None
        if "convmf" in methods:
            avail = available_checkpoints(args.checkpoint_dir) if args.checkpoint_dir else {}
            usable = {r: p for r, p in avail.items() if r in args.ranks}
            if len(usable) == len(args.ranks) and all(
                load_checkpoint(p).input_shape == shape for p in usable.values()
            ):
                models = lambda r: load_checkpoint(usable[r], rank=r)  # noqa: E731
                weights[f"{shape[0]}x{shape[1]}"] = "checkpoint"
            else:
                # inference cost does not depend on the weight values
                models = lambda r: build_convmf(shape[0], shape[1], Hyperparameters(rank=r, seed=args.seed))  # noqa: E731
                weights[f"{shape[0]}x{shape[1]}"] = "initialized"
        recs = timing_benchmark(frame, args.ranks, methods, cfg, models)
        print(f"[{shape[0]}x{shape[1]}]")
        for t in recs:
            batch = f" (x{t.inner_loops} batched)" if t.inner_loops > 1 else ""
            print(f"  rank {t.rank:>3d}  {t.method:<10s} {t.wall_time_ns / 1e6:10.3f} ms{batch}")
            rows.append((t.m, t.n, t.rank, t.method, t.wall_time_ns, t.inner_loops))
    out = Path(args.out)
    with _tracked() as files:
        write_rows_csv(files.add(out), ("m", "n", "rank", "method", "wall_time_ns", "inner_loops"), rows)
        config = _config_dict(args)
        config["convmf_weights"] = weights
        write_manifest(files.add(out.with_name(out.name + ".manifest.json")), "benchmark", config,
                       {"seed": args.seed}, [out.name])
    return 0


# ----------------------------------------------------------------------------
# export

def cmd_export(args) -> int:
    series = _read_series(args.data)
    out = Path(args.out)
    energy_csv = Path(args.energy_csv) if args.energy_csv else out.with_suffix(".energy.csv")
    g = series.grid
    with _tracked() as files:
        with open(files.add(out), "wb") as fh:
            np.savez(fh, frames=series.frames, field_energy=series.field_energy, times=series.times, x=g.x, v=g.v)
        write_rows_csv(files.add(energy_csv), ("time", "field_energy"),
                       zip(series.times.tolist(), series.field_energy.tolist()))
    print(f"wrote {len(series)} frames to {out} and field energy to {energy_csv}")
    return 0


# ----------------------------------------------------------------------------
# parser

COMMANDS = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "benchmark": cmd_benchmark,
    "export": cmd_export,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vlasov-lrmf",
        description="Simulate Vlasov-Poisson runs, train ConvMF factorizers and evaluate them against SVD.",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def common(p):
        p.add_argument("--config", help="INI file; the section named after the command supplies defaults")
        p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")

    p = sub.add_parser("simulate", help="run the Vlasov-Poisson solver and write a VPTS file")
    common(p)
    p.add_argument("--ic", choices=sorted(INITIAL_CONDITIONS), default="landau-strong", help="initial condition")
    p.add_argument("--nx", type=int, default=64, help="spatial cells (rows)")
    p.add_argument("--nv", type=int, default=128, help="velocity cells (columns)")
    p.add_argument("--steps", type=int, default=100, help="time steps")
    p.add_argument("--dt", type=float, default=0.05, help="time step")
    p.add_argument("--record-every", type=int, default=1, help="store every k-th step")
    p.add_argument("--out", required=True, help="output VPTS path")

    p = sub.add_parser("train", help="train one ConvMF network per rank")
    common(p)
    p.add_argument("--data", required=True, help="input VPTS file")
    p.add_argument("--ranks", type=int_list, default=[12], help="comma-separated ranks, e.g. 5,12,30")
    p.add_argument("--split", default="random70", help="random70 (interpolation) or sequential70 (extrapolation)")
    p.add_argument("--augment-random-ic", action="store_true", help="add random-IC frames to the training set")
    p.add_argument("--epochs", type=int, default=None, help="epochs (default 200)")
    p.add_argument("--learning-rate", "--lr", dest="learning_rate", type=float, default=None, help="default 1e-4")
    p.add_argument("--activation", default=None, help="tanh (default), relu, leaky_relu or sigmoid")
    p.add_argument("--optimizer", default=None, help="adam (default), sgd or adagrad")
    p.add_argument("--batch-size", type=int, default=None, help="minibatch size (default 16)")
    p.add_argument("--workers", type=int, default=None, help="ranks trained in parallel (capped by LRMF_THREADS)")
    p.add_argument("--out-dir", default="checkpoints", help="checkpoint and history directory")

    p = sub.add_parser("evaluate", help="per-frame losses, averages and histograms over held-out frames")
    common(p)
    p.add_argument("--data", required=True, help="input VPTS file")
    p.add_argument("--checkpoint-dir", default=None, help="directory of convmf_rank<r>.cmf files")
    p.add_argument("--ranks", type=int_list, default=None,
                   help="ranks to evaluate (default: all checkpoints, or 5,10,...,30 for SVD only)")
    p.add_argument("--methods", type=str_list, default=list(METHODS), help=f"subset of {','.join(METHODS)}")
    p.add_argument("--split", default="random70", help="split used at training time")
    p.add_argument("--bins", type=int, default=50, help="histogram bins")
    p.add_argument("--workers", type=int, default=None, help="frames evaluated in parallel (capped by LRMF_THREADS)")
    p.add_argument("--out-dir", default="evaluation", help="output directory")

    p = sub.add_parser("benchmark", help="single-threaded wall-clock timing of SVD and ConvMF")
    common(p)
    p.add_argument("--data", default=None, help="VPTS file supplying the frame for its size")
    p.add_argument("--sizes", type=size_list, default=[(64, 128), (128, 256)], help="e.g. 64x128,128x256")
    p.add_argument("--ranks", type=int_list, default=list(range(5, 31, 5)), help="ranks to time")
    p.add_argument("--methods", type=str_list, default=list(TIMING_METHODS), help=f"subset of {','.join(TIMING_METHODS)}")
    p.add_argument("--checkpoint-dir", default=None, help="ConvMF checkpoints; freshly initialized models otherwise")
    p.add_argument("--warmup-runs", type=int, default=3, help="untimed calls before measuring")
    p.add_argument("--measured-runs", type=int, default=11, help="timed calls (median reported, >= 5)")
    p.add_argument("--min-interval-ms", type=float, default=0.0,
                   help="batch calls until one measurement lasts at least this long (default 0: single calls)")
    p.add_argument("--frame-steps", type=int, default=200, help="solver steps for a generated Landau frame")
    p.add_argument("--out", default="timing.csv", help="output CSV")

    p = sub.add_parser("export", help="convert a VPTS file to .npz plus a field-energy CSV")
    common(p)
    p.add_argument("--data", required=True, help="input VPTS file")
    p.add_argument("--out", required=True, help="output .npz path")
    p.add_argument("--energy-csv", default=None, help="field-energy CSV (default: the --out path with suffix .energy.csv)")
    return parser


_CONVERTERS = {
    "ranks": int_list,
    "methods": str_list,
    "sizes": size_list,
    "augment_random_ic": _bool,
}


def _apply_config(parser: argparse.ArgumentParser, argv) -> None:
    """Feed the INI section of the chosen command in as parser defaults."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(argv)
    if not known.config:
        return
    command = next((a for a in argv if a in COMMANDS), None)
    if command is None:
        return
    cp = configparser.ConfigParser()
    if not cp.read(known.config):
        raise CommandError(f"config file {known.config} not found")
    if not cp.has_section(command):
        return
    sub = parser._subparsers._group_actions[0].choices[command]
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, raw in cp.items(command):
        dest = key.replace("-", "_")
        if dest not in actions:
            raise CommandError(f"{known.config}: unknown key {key!r} in [{command}]")
        conv = _CONVERTERS.get(dest) or actions[dest].type or str
        try:
            defaults[dest] = conv(raw)
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise CommandError(f"{known.config}: bad value for {key}: {exc}") from exc
        if actions[dest].choices and defaults[dest] not in actions[dest].choices:
            raise CommandError(f"{known.config}: {key} must be one of {sorted(actions[dest].choices)}")
        if actions[dest].required:
            actions[dest].required = False
    sub.set_defaults(**defaults)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (CommandError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
