"""Dense and Krylov linear-algebra kernels.

Matrices are plain 2-D float64 numpy arrays. The dense SVD is LAPACK's
divide-and-conquer routine (what ``scipy.linalg.svd`` calls by default); the
truncated SVD is a thick-restarted Golub-Kahan-Lanczos bidiagonalization with
full reorthogonalization, written here so its cost profile is explicit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.linalg


class LinalgError(ValueError):
    """Shape or argument errors raised by this module."""


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, iterations: int):
        super().__init__(f"{message} (after {iterations} iterations)")
        self.iterations = iterations


class SvdResult(NamedTuple):
    """``left`` is m x k, ``singular_values`` has length k, ``right`` is k x n."""

    left: np.ndarray
    singular_values: np.ndarray
    right: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.left * self.singular_values) @ self.right


class FactorPair(NamedTuple):
    u: np.ndarray
    v: np.ndarray

    def product(self) -> np.ndarray:
        return self.u @ self.v


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise LinalgError(f"{name} must be a non-empty 2-D array, got shape {a.shape}")
    return a


def matmul(a, b) -> np.ndarray:
    """Matrix product with shape checking.

    Delegates to BLAS. Given the same inputs, thread count and machine the
    accumulation order is fixed, so results are reproducible run to run.
    """
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise LinalgError(f"dimension mismatch: {a.shape} @ {b.shape}")
    return a @ b


# Relative cutoff below which singular values of the coefficient matrix are
# treated as zero in lstsq.
LSTSQ_RCOND = 1e-12


def lstsq(a, b, rcond: float = LSTSQ_RCOND, return_rank: bool = False):
    """Minimum-Frobenius-norm solution of ``min ||a X - b||_F``.

    Solved through the SVD of ``a`` (an orthogonal factorization; the normal
    equations are never formed). Singular values below ``rcond * s_max`` are
    dropped, which gives the minimum-norm minimizer for rank-deficient ``a``.
    ``b`` may be 1-D or 2-D.
    """
    a = as_matrix(a, "a")
    b = np.asarray(b, dtype=np.float64)
    vector_rhs = b.ndim == 1
    if vector_rhs:
        b = b[:, None]
    if b.ndim != 2 or b.shape[0] != a.shape[0]:
        raise LinalgError(f"dimension mismatch: a is {a.shape}, b is {b.shape}")
    u, s, vt = scipy.linalg.svd(a, full_matrices=False, lapack_driver="gesdd")
    keep = s > rcond * s[0] if s.size and s[0] > 0 else np.zeros_like(s, dtype=bool)
    rank = int(keep.sum())
    coeffs = (u[:, :rank].T @ b) / s[:rank, None]
    x = vt[:rank].T @ coeffs
    if vector_rhs:
        x = x[:, 0]
    if return_rank:
        return x, rank
    return x


def svd_dense(x) -> SvdResult:
    """Full thin SVD, k = min(m, n). Costs O(m^2 n) for m <= n."""
    x = as_matrix(x, "x")
    if not np.all(np.isfinite(x)):
        raise LinalgError("svd_dense: non-finite entries")
    try:
        u, s, vt = scipy.linalg.svd(x, full_matrices=False, lapack_driver="gesdd")
    except np.linalg.LinAlgError:
        # gesdd can fail to converge on pathological inputs; gesvd is slower but sturdier.
        try:
            u, s, vt = scipy.linalg.svd(x, full_matrices=False, lapack_driver="gesvd")
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError(f"dense SVD did not converge: {exc}", iterations=-1) from exc
    return SvdResult(u, s, vt)


@dataclass
class LanczosInfo:
    restarts: int = 0
    matvecs: int = 0
    residuals: np.ndarray = field(default_factory=lambda: np.empty(0))


def _orthogonalize(w: np.ndarray, basis: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # classical Gram-Schmidt applied twice is enough for full orthogonality
    if basis.shape[1] == 0:
        return w, np.zeros(0)
    c1 = basis.T @ w
    w = w - basis @ c1
    c2 = basis.T @ w
    w = w - basis @ c2
    return w, c1 + c2


def _unit_orthogonal(rng: np.random.Generator, basis: np.ndarray) -> np.ndarray:
    for _ in range(5):
        w = rng.standard_normal(basis.shape[0])
        w, _ = _orthogonalize(w, basis)
        nrm = np.linalg.norm(w)
        if nrm > 1e-8:
            return w / nrm
    raise ConvergenceError("could not extend orthonormal basis", iterations=0)


def svd_truncated(
    x,
    r: int,
    tol: float = 1e-10,
    krylov_dim: int | None = None,
    max_restarts: int = 200,
    seed: int = 0,
    info: LanczosInfo | None = None,
) -> SvdResult:
    """Top-``r`` singular triplets by Lanczos bidiagonalization.

    Golub-Kahan-Lanczos with full reorthogonalization and thick restarts: the
    projected matrix ``B = Q^T x P`` is kept as a dense upper-triangular
    array, so restarting from ``r + extra`` Ritz vectors needs no special
    bookkeeping. Each Lanczos step costs two matrix-vector products, O(mn),
    plus O((m + n) k) for reorthogonalization; a typical run takes O(r) steps,
    for O(mnr) overall.

    A triplet is accepted when its residual ``||x^T u - s v||`` falls below
    ``tol * s_1``. The starting vector is drawn from a generator seeded with
    ``seed`` so the output is deterministic.
    """
    x = as_matrix(x, "x")
    m, n = x.shape
    kmax = min(m, n)
    if not 1 <= r < kmax:
        raise LinalgError(f"rank r={r} out of range [1, {kmax - 1}] for shape {x.shape}")
    if m < n:
        # iterate on the transpose so the right basis lives in the smaller space
        u, s, vt = svd_truncated(x.T, r, tol, krylov_dim, max_restarts, seed, info)
        return SvdResult(vt.T, s, u.T)
    if krylov_dim is None:
        krylov_dim = max(2 * r, r + 10)
    k = min(max(krylov_dim, r + 2), kmax)
    keep = min(r + max(2, (k - r) // 2), k - 1)

    rng = np.random.default_rng(seed)
    info = info if info is not None else LanczosInfo()
    P = np.zeros((n, k))
    Q = np.zeros((m, k))
    B = np.zeros((k, k))
    anorm = 0.0

    p = rng.standard_normal(n)
    p /= np.linalg.norm(p)
    start = 0
    for restart in range(max_restarts + 1):
        info.restarts = restart
        beta = 0.0
        for j in range(start, k):
            P[:, j] = p
            w = x @ p
            info.matvecs += 1
            w, coeffs = _orthogonalize(w, Q[:, :j])
            alpha = np.linalg.norm(w)
            anorm = max(anorm, alpha, np.abs(coeffs).max(initial=0.0))
            B[:j, j] = coeffs
            if alpha <= 1e-14 * anorm:
                # invariant subspace reached on the left; continue with any unit vector
                Q[:, j] = _unit_orthogonal(rng, Q[:, :j])
                alpha = 0.0
            else:
                Q[:, j] = w / alpha
            B[j, j] = alpha

            z = x.T @ Q[:, j]
            info.matvecs += 1
            z, _ = _orthogonalize(z, P[:, : j + 1])
            beta = np.linalg.norm(z)
            anorm = max(anorm, beta)
            if beta <= 1e-14 * anorm:
                beta = 0.0
                p = _unit_orthogonal(rng, P[:, : j + 1]) if j + 1 < n else np.zeros(n)
            else:
                p = z / beta

        Xb, s, Ybt = np.linalg.svd(B)
        residuals = np.abs(beta * Xb[k - 1, :])
        info.residuals = residuals[:r]
        if s[0] == 0.0 or np.all(residuals[:r] <= tol * s[0]) or k == kmax:
            U = Q @ Xb[:, :r]
            Vt = (P @ Ybt[:r].T).T
            return SvdResult(U, s[:r].copy(), Vt)

        # thick restart: keep the leading Ritz vectors, continue from p
        Q[:, :keep] = Q @ Xb[:, :keep]
        P[:, :keep] = P @ Ybt[:keep].T
        B[:] = 0.0
        B[np.arange(keep), np.arange(keep)] = s[:keep]
        start = keep

    raise ConvergenceError(
        f"svd_truncated: rank {r} not converged to tol={tol:g}", iterations=info.restarts
    )


def best_rank_error(s, r: int, x_norm: float) -> float:
    """Normalized squared Frobenius error of the optimal rank-``r`` approximation.

    ``sum_{i > r} s_i^2 / x_norm^2``, by Eckart-Young. Returns 0 when ``r``
    covers every singular value.
    """
    s = np.asarray(s, dtype=np.float64)
    if r >= s.size:
        return 0.0
    tail = s[r:]
    return float(np.dot(tail, tail) / (x_norm * x_norm))


# Centered first-derivative stencils, offsets -p..p (the zero center is implied).
_CENTERED_STENCILS = {
    2: np.array([-1 / 2, 0.0, 1 / 2]),
    4: np.array([1 / 12, -2 / 3, 0.0, 2 / 3, -1 / 12]),
    6: np.array([-1 / 60, 3 / 20, -3 / 4, 0.0, 3 / 4, -3 / 20, 1 / 60]),
}


@dataclass
class FlopCounter:
    madds: int = 0


@dataclass(frozen=True)
class BandedOperator:
    """Periodic banded first-derivative operator.

    ``coefficients`` already include the ``1/spacing`` factor. Applying the
    operator to an array acts along axis 0 (each column is differentiated).
    """

    size: int
    offsets: tuple[int, ...]
    coefficients: tuple[float, ...]
    spacing: float
    boundary: str = "periodic"

    @property
    def stencil_width(self) -> int:
        return len(self.offsets)

    def apply(self, a, counter: FlopCounter | None = None) -> np.ndarray:
        a = np.asarray(a, dtype=np.float64)
        if a.shape[0] != self.size:
            raise LinalgError(f"operator size {self.size} does not match {a.shape[0]} rows")
        out = np.zeros_like(a)
        for off, c in zip(self.offsets, self.coefficients):
            # (D a)_i = sum_k c_k a_{i+k}
            out += c * np.roll(a, -off, axis=0)
        if counter is not None:
            counter.madds += self.stencil_width * a.size
        return out

    def to_dense(self) -> np.ndarray:
        d = np.zeros((self.size, self.size))
        rows = np.arange(self.size)
        for off, c in zip(self.offsets, self.coefficients):
            d[rows, (rows + off) % self.size] += c
        return d

    def row_sums(self) -> np.ndarray:
        return self.to_dense().sum(axis=1)


def build_diff_operator(size: int, spacing: float, order: int = 2, boundary: str = "periodic") -> BandedOperator:
    if boundary != "periodic":
        raise LinalgError(f"unsupported boundary {boundary!r}; only 'periodic'")
    if order not in _CENTERED_STENCILS:
        raise LinalgError(f"unsupported order {order}; choose from {sorted(_CENTERED_STENCILS)}")
    stencil = _CENTERED_STENCILS[order]
    half = order // 2
    if size < 2 * half + 1:
        raise LinalgError(f"grid of {size} points too small for order-{order} stencil")
    offsets = tuple(off for off in range(-half, half + 1) if off != 0)
    coefficients = tuple(float(stencil[off + half] / spacing) for off in offsets)
    return BandedOperator(size, offsets, coefficients, float(spacing), boundary)


def apply_derivative_factored(d: BandedOperator, u, v, counter: FlopCounter | None = None) -> FactorPair:
    """Spatial derivative of ``X = u v`` in factored form: ``D X = (D u) v``.

    Only ``u`` (m x r) is touched, so the cost is O(m r w) for a stencil of
    width w instead of O(m n w) for the dense ``D X``.
    """
    u = as_matrix(u, "u")
    v = as_matrix(v, "v")
    if u.shape[1] != v.shape[0]:
        raise LinalgError(f"factor shapes {u.shape} and {v.shape} do not chain")
    return FactorPair(d.apply(u, counter), v)


def apply_velocity_derivative_factored(d: BandedOperator, u, v, counter: FlopCounter | None = None) -> FactorPair:
    """Velocity derivative ``X D^T = u (v D^T)``, touching only ``v``."""
    u = as_matrix(u, "u")
    v = as_matrix(v, "v")
    if u.shape[1] != v.shape[0]:
        raise LinalgError(f"factor shapes {u.shape} and {v.shape} do not chain")
    return FactorPair(u, d.apply(v.T, counter).T)
