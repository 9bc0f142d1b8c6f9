"""Reconstruction losses and least-squares repair of network factors.

All losses here are the squared ratio ``||X - approx||_F^2 / ||X||_F^2``,
including the repaired ("calculated") variants.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from ..linalg_core import best_rank_error, lstsq, svd_dense


class DegenerateInput(ValueError):
    pass


def _sq_norm(x) -> float:
    return float(np.einsum("ij,ij->", x, x))


def normalized_loss(x, u, v) -> float:
    x = np.asarray(x, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.ndim != 2 or v.ndim != 2 or u.shape[0] != x.shape[0] or v.shape[1] != x.shape[1] or u.shape[1] != v.shape[0]:
        raise ValueError(f"factor shapes {u.shape}, {v.shape} do not match {x.shape}")
    denom = _sq_norm(x)
    if denom == 0.0:
        raise DegenerateInput("normalized loss undefined for a zero matrix")
    r = x - u @ v
    return _sq_norm(r) / denom


def batch_normalized_loss(x, u, v) -> np.ndarray:
    """Per-frame normalized loss for stacks (B, m, n), (B, m, r), (B, r, n)."""
    resid = x - u @ v
    num = np.einsum("bij,bij->b", resid, resid)
    den = np.einsum("bij,bij->b", x, x)
    if np.any(den == 0.0):
        raise DegenerateInput("normalized loss undefined for a zero matrix")
    return num / den


def svd_loss(x, r: int) -> float:
    """Optimal rank-``r`` normalized loss from the dense SVD."""
    x = np.asarray(x, dtype=np.float64)
    s = svd_dense(x).singular_values
    return best_rank_error(s, r, np.sqrt(_sq_norm(x)))


class Repair(NamedTuple):
    """Outcome of a least-squares repair: loss, the solved factor, and whether
    the fixed factor(s) had full rank."""

    loss: float
    factor: np.ndarray
    full_rank: bool


def calculated_u(x, v) -> Repair:
    """Best ``U~`` for fixed ``V``: ``min ||X - U~ V||``, i.e. ``V^T U~^T = X^T``."""
    x = np.asarray(x, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    sol, rank = lstsq(v.T, x.T, return_rank=True)
    u_opt = sol.T
    return Repair(normalized_loss(x, u_opt, v), u_opt, rank == v.shape[0])


def calculated_v(x, u) -> Repair:
    """Best ``V~`` for fixed ``U``: ``min ||X - U V~||``."""
    x = np.asarray(x, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    v_opt, rank = lstsq(u, x, return_rank=True)
    return Repair(normalized_loss(x, u, v_opt), v_opt, rank == u.shape[1])


def calculated_sigma(x, u, v) -> Repair:
    """Best ``r x r`` core for fixed ``U`` and ``V``: ``min ||X - U S V||``.

    The minimizer is ``U^+ X V^+``, obtained as two chained least-squares
    solves: ``A = argmin ||U A - X||`` then ``S^T = argmin ||V^T S^T - A^T||``.
    """
    x = np.asarray(x, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    a, rank_u = lstsq(u, x, return_rank=True)
    st, rank_v = lstsq(v.T, a.T, return_rank=True)
    s_opt = st.T
    loss = normalized_loss(x, u @ s_opt, v)
    return Repair(loss, s_opt, rank_u == u.shape[1] and rank_v == v.shape[0])
