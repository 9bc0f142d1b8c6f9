"""Evaluation records and their CSV / manifest serialization.

Floats are written with 17 significant digits so every row reads back to the
identical double.
"""

from __future__ import annotations

import csv
import json
import subprocess
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

METHODS = ("convmf", "svd_basic", "svd_faster", "calc_u", "calc_v", "calc_sigma")
RECORD_HEADER = ("frame_index", "rank", "method", "scaled_loss", "wall_time_ns")
HISTOGRAM_HEADER = ("bin_left", "bin_right", "count")
LOSS_CONVENTION = "scaled_loss = ||X - approx||_F^2 / ||X||_F^2 for every method"


class EvalRecord(NamedTuple):
    frame_index: int
    rank: int
    method: str
    scaled_loss: float
    wall_time_ns: int = 0
    # least-squares repairs only: whether the fixed factor had full rank
    full_rank: bool = True


def _g17(x: float) -> str:
    return "%.17g" % x


def write_records_csv(path, records: Iterable[EvalRecord]) -> None:
    rows = sorted(records, key=lambda r: (r.frame_index, r.rank, METHODS.index(r.method)))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORD_HEADER)
        for r in rows:
            w.writerow((r.frame_index, r.rank, r.method, _g17(r.scaled_loss), int(r.wall_time_ns)))


def read_records_csv(path) -> list[EvalRecord]:
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = tuple(next(rd, ()))
        if header != RECORD_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        return [EvalRecord(int(f), int(r), m, float(s), int(t)) for f, r, m, s, t in rd]


def write_histogram_csv(path, edges: np.ndarray, counts: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HISTOGRAM_HEADER)
        for lo, hi, c in zip(edges[:-1], edges[1:], counts):
            w.writerow((_g17(lo), _g17(hi), int(c)))


def read_histogram_csv(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = tuple(next(rd, ()))
        if header != HISTOGRAM_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        rows = [(float(a), float(b), int(c)) for a, b, c in rd]
    if not rows:
        return np.array([]), np.array([], dtype=int)
    edges = np.array([rows[0][0]] + [b for _, b, _ in rows])
    return edges, np.array([c for _, _, c in rows])


def write_rows_csv(path, header: Iterable[str], rows: Iterable[Iterable]) -> None:
    """Generic CSV with floats at full precision."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(tuple(header))
        for row in rows:
            w.writerow(tuple(_g17(v) if isinstance(v, float) else v for v in row))


def version_string() -> str:
    """``git describe`` of the source tree when available, else the package version."""
    from .. import __version__

    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent, capture_output=True, text=True, timeout=5,
        )
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+git.{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def write_manifest(path, command: str, config: dict, seeds: dict, outputs: Iterable[str]) -> None:
    manifest = {
        "command": command,
        "version": version_string(),
        "config": config,
        "seeds": seeds,
        "loss_convention": LOSS_CONVENTION,
        "outputs": sorted(str(o) for o in outputs),
    }
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
