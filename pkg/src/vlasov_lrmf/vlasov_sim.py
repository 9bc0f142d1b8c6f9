"""1D1V Vlasov-Poisson data generation.

Solves

    f_t + v f_x + E f_v = 0,   E = -phi_x,   -phi_xx = rho - rho0

on a periodic x domain and a truncated v domain with Strang-split
semi-Lagrangian advection. Each split sub-step is a 1-D shift evaluated with
six-point (quintic) Lagrange interpolation: periodic in x, zero inflow in v.
The Poisson problem is solved spectrally.

Snapshots are stored as ``nx x nv`` matrices, rows indexing space and columns
indexing velocity.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter


class SimulationError(RuntimeError):
    pass


class VptsFormatError(ValueError):
    pass


@dataclass(frozen=True)
class PhaseSpaceGrid:
    nx: int
    nv: int
    x_min: float = 0.0
    x_max: float = 4 * np.pi
    v_min: float = -2 * np.pi
    v_max: float = 2 * np.pi

    def __post_init__(self):
        if self.nx < 1 or self.nv < 1:
            raise ValueError(f"grid needs nx, nv >= 1, got {self.nx}, {self.nv}")
        if not (self.x_max > self.x_min and self.v_max > self.v_min):
            raise ValueError("grid extents must be increasing")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.nx

    @property
    def dv(self) -> float:
        return (self.v_max - self.v_min) / self.nv

    @property
    def x(self) -> np.ndarray:
        return self.x_min + (np.arange(self.nx) + 0.5) * self.dx

    @property
    def v(self) -> np.ndarray:
        return self.v_min + (np.arange(self.nv) + 0.5) * self.dv

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.nv)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.v, indexing="ij")


@dataclass
class FieldState:
    rho: np.ndarray
    rho0: float
    phi: np.ndarray
    e_field: np.ndarray

    def energy(self, dx: float) -> float:
        return 0.5 * float(np.sum(self.e_field**2)) * dx


@dataclass
class TimeSeries:
    grid: PhaseSpaceGrid
    dt: float
    frames: np.ndarray  # (T, nx, nv)
    field_energy: np.ndarray
    ic_name: str = "unknown"
    metadata: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.frames.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(len(self))


def _check_grid_matrix(f: np.ndarray, grid: PhaseSpaceGrid):
    if f.shape != grid.shape:
        raise ValueError(f"matrix shape {f.shape} does not match grid {grid.shape}")


# ----------------------------------------------------------------------------
# initial conditions

def init_landau_strong(grid: PhaseSpaceGrid, alpha: float = 0.5, k: float = 0.5) -> np.ndarray:
    x, v = grid.mesh()
    return (1 + alpha * np.cos(k * x)) * np.exp(-0.5 * v**2) / np.sqrt(2 * np.pi)


def init_two_stream(grid: PhaseSpaceGrid, alpha: float = 0.05, k: float = 0.5, v0: float = 2.4) -> np.ndarray:
    x, v = grid.mesh()
    beams = np.exp(-0.5 * (v - v0) ** 2) + np.exp(-0.5 * (v + v0) ** 2)
    return beams * (1 + alpha * np.cos(k * x)) / (2 * np.sqrt(2 * np.pi))


def init_random_smooth(grid: PhaseSpaceGrid, seed: int = 0, smooth_scale: float = 4.0, rho0: float = 1.0) -> np.ndarray:
    """Seeded uniform noise blurred by a Gaussian of ``smooth_scale`` cells.

    Uniform [0, 1) noise stays nonnegative under a positive kernel, so only a
    rescale is needed: the result has mean charge density ``rho0``.
    """
    if smooth_scale <= 0:
        raise ValueError("smooth_scale must be positive")
    rng = np.random.default_rng(seed)
    noise = rng.random(grid.shape)
    f = gaussian_filter(noise, sigma=smooth_scale, mode="wrap")
    f *= rho0 / (f.mean() * (grid.v_max - grid.v_min))
    return f


INITIAL_CONDITIONS = {
    "landau-strong": init_landau_strong,
    "two-stream": init_two_stream,
    "random-smooth": init_random_smooth,
}


# ----------------------------------------------------------------------------
# field solve

def charge_density(f, grid: PhaseSpaceGrid) -> np.ndarray:
    f = np.asarray(f, dtype=np.float64)
    _check_grid_matrix(f, grid)
    return f.sum(axis=1) * grid.dv


def poisson_solve(rho, grid: PhaseSpaceGrid) -> FieldState:
    """Spectral solve of ``-phi'' = rho - mean(rho)`` with zero-mean ``phi``."""
    rho = np.asarray(rho, dtype=np.float64)
    if rho.shape != (grid.nx,):
        raise ValueError(f"rho has shape {rho.shape}, expected ({grid.nx},)")
    rho0 = float(rho.mean())
    wavenumber = 2 * np.pi * np.fft.rfftfreq(grid.nx, d=grid.dx)
    rho_hat = np.fft.rfft(rho - rho0)
    phi_hat = np.zeros_like(rho_hat)
    phi_hat[1:] = rho_hat[1:] / wavenumber[1:] ** 2
    if grid.nx % 2 == 0:
        # the Nyquist mode has no well-defined derivative on a real grid
        phi_hat[-1] = 0.0
    e_hat = -1j * wavenumber * phi_hat
    phi = np.fft.irfft(phi_hat, n=grid.nx)
    e_field = np.fft.irfft(e_hat, n=grid.nx)
    return FieldState(rho=rho, rho0=rho0, phi=phi, e_field=e_field)


def field_energy(f, grid: PhaseSpaceGrid) -> float:
    return poisson_solve(charge_density(f, grid), grid).energy(grid.dx)


def total_mass(f, grid: PhaseSpaceGrid) -> float:
    return float(np.sum(f)) * grid.dx * grid.dv


# ----------------------------------------------------------------------------
# advection

_NODES = np.arange(-2, 4)  # six-point stencil around floor(position)


def lagrange_weights(t: np.ndarray) -> np.ndarray:
    """Quintic Lagrange weights on nodes -2..3 evaluated at ``t`` in [0, 1).

    Returns shape ``t.shape + (6,)``.
    """
    t = np.asarray(t, dtype=np.float64)[..., None]
    w = np.ones(t.shape[:-1] + (6,))
    for a, xa in enumerate(_NODES):
        for b, xb in enumerate(_NODES):
            if a != b:
                w[..., a] *= (t[..., 0] - xb) / (xa - xb)
    return w


def shift_rows(g: np.ndarray, shift: np.ndarray, periodic: bool) -> np.ndarray:
    """Evaluate each row of ``g`` at ``j + shift[row]`` (in index units).

    Non-periodic rows read zero outside ``[0, N)``.
    """
    n_rows, n = g.shape
    base = np.floor(shift)
    frac = shift - base
    w = lagrange_weights(frac)
    idx = np.arange(n)[None, :, None] + base.astype(np.int64)[:, None, None] + _NODES[None, None, :]
    rows = np.arange(n_rows)[:, None, None]
    if periodic:
        vals = g[rows, idx % n]
    else:
        inside = (idx >= 0) & (idx < n)
        vals = np.where(inside, g[rows, np.clip(idx, 0, n - 1)], 0.0)
    return np.einsum("rjk,rk->rj", vals, w)


def advect_x(f: np.ndarray, dt: float, grid: PhaseSpaceGrid) -> np.ndarray:
    """``f(x, v) <- f(x - v dt, v)``, periodic in x."""
    disp = grid.v * dt
    limit = 0.5 * (grid.x_max - grid.x_min)
    if np.max(np.abs(disp)) > limit:
        raise SimulationError(f"x displacement {np.max(np.abs(disp)):.3g} exceeds half the domain")
    return shift_rows(f.T, -disp / grid.dx, periodic=True).T


def advect_v(f: np.ndarray, e_field: np.ndarray, dt: float, grid: PhaseSpaceGrid) -> np.ndarray:
    """``f(x, v) <- f(x, v - E(x) dt)``, zero inflow at the velocity edges."""
    disp = e_field * dt
    limit = 0.5 * (grid.v_max - grid.v_min)
    if np.max(np.abs(disp)) > limit:
        raise SimulationError(f"v displacement {np.max(np.abs(disp)):.3g} exceeds half the domain")
    return shift_rows(f, -disp / grid.dv, periodic=False)


def step(f, dt: float, grid: PhaseSpaceGrid, free_streaming: bool = False) -> tuple[np.ndarray, FieldState]:
    """One Strang step: x half-step, Poisson, v full step, x half-step.

    The returned field is the one used for the velocity kick. With
    ``free_streaming`` the field is forced to zero.
    """
    f = np.asarray(f, dtype=np.float64)
    _check_grid_matrix(f, grid)
    if not np.all(np.isfinite(f)):
        raise SimulationError("non-finite values in input distribution")
    f = advect_x(f, 0.5 * dt, grid)
    state = poisson_solve(charge_density(f, grid), grid)
    if free_streaming:
        state.e_field = np.zeros_like(state.e_field)
    else:
        f = advect_v(f, state.e_field, dt, grid)
    f = advect_x(f, 0.5 * dt, grid)
    if not np.all(np.isfinite(f)):
        raise SimulationError("non-finite values in distribution")
    return f, state


def run(
    ic,
    grid: PhaseSpaceGrid,
    dt: float,
    steps: int,
    record_every: int = 1,
    ic_name: str = "unknown",
    free_streaming: bool = False,
    progress=None,
) -> TimeSeries:
    """Integrate ``steps`` steps, keeping the initial frame and every ``record_every``-th one."""
    if steps < 0 or record_every < 1:
        raise ValueError("steps must be >= 0 and record_every >= 1")
    f = np.array(ic, dtype=np.float64)
    _check_grid_matrix(f, grid)
    frames = [f.copy()]
    energies = [field_energy(f, grid)]
    for i in range(1, steps + 1):
        try:
            f, _ = step(f, dt, grid, free_streaming=free_streaming)
        except SimulationError as exc:
            raise SimulationError(f"step {i}: {exc}") from exc
        if i % record_every == 0:
            frames.append(f.copy())
            energies.append(field_energy(f, grid))
        if progress is not None:
            progress(i)
    return TimeSeries(
        grid=grid,
        dt=dt * record_every,
        frames=np.stack(frames),
        field_energy=np.array(energies),
        ic_name=ic_name,
        metadata={"dt_step": dt, "steps": steps, "record_every": record_every},
    )


# ----------------------------------------------------------------------------
# VPTS container

VPTS_MAGIC = b"VPTS"
VPTS_VERSION = 1
_VPTS_HEADER = struct.Struct("<4sIIIIddddd")


def write_series(path, series: TimeSeries) -> None:
    frames = np.ascontiguousarray(series.frames, dtype="<f8")
    t, nx, nv = frames.shape
    g = series.grid
    if (nx, nv) != g.shape:
        raise ValueError(f"frames {frames.shape[1:]} do not match grid {g.shape}")
    energy = np.ascontiguousarray(series.field_energy, dtype="<f8")
    if energy.shape != (t,):
        raise ValueError("one field-energy value per frame required")
    header = _VPTS_HEADER.pack(VPTS_MAGIC, VPTS_VERSION, nx, nv, t, series.dt, g.x_min, g.x_max, g.v_min, g.v_max)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(frames.tobytes())
        fh.write(energy.tobytes())


def read_series(path) -> TimeSeries:
    data = Path(path).read_bytes()
    if len(data) < _VPTS_HEADER.size:
        raise VptsFormatError(f"{path}: truncated header ({len(data)} bytes)")
    magic, version, nx, nv, t, dt, x_min, x_max, v_min, v_max = _VPTS_HEADER.unpack_from(data)
    if magic != VPTS_MAGIC:
        raise VptsFormatError(f"{path}: bad magic {magic!r}, expected {VPTS_MAGIC!r}")
    if version != VPTS_VERSION:
        raise VptsFormatError(f"{path}: unsupported version {version}")
    expected = _VPTS_HEADER.size + 8 * (t * nx * nv + t)
    if len(data) != expected:
        kind = "truncated" if len(data) < expected else "oversized"
        raise VptsFormatError(f"{path}: {kind} file, {len(data)} bytes, expected {expected}")
    buf = io.BytesIO(data)
    buf.seek(_VPTS_HEADER.size)
    frames = np.frombuffer(buf.read(8 * t * nx * nv), dtype="<f8").reshape(t, nx, nv).astype(np.float64)
    energy = np.frombuffer(buf.read(8 * t), dtype="<f8").astype(np.float64)
    grid = PhaseSpaceGrid(nx, nv, x_min, x_max, v_min, v_max)
    return TimeSeries(grid=grid, dt=dt, frames=frames, field_energy=energy)
