"""Multilinear algebra kernels: unfoldings, Khatri-Rao products, index maps, n-mode products.

Unfoldings follow the convention in which the remaining indices are laid out
with the lower mode varying fastest, so that for a CP tensor with factors
(A, B, C)::

    unfold(Y, 1).T == khatri_rao(C, B) @ A.T    # Q x (T_a*P), column (p-1)*T_a + t
    unfold(Y, 2).T == khatri_rao(C, A) @ B.T    # T_a x (Q*P), column (p-1)*Q + q
    unfold(Y, 3).T == khatri_rao(B, A) @ C.T    # P x (Q*T_a), column (t-1)*Q + q

``vec`` is column-major throughout.
"""

from __future__ import annotations

from functools import reduce
from typing import Sequence

import numpy as np

from .errors import IndexOutOfRange, InvalidMode, ShapeMismatch


def _check_mode(mode: int, ndim: int = 3) -> None:
    if mode not in range(1, ndim + 1):
        raise InvalidMode(f"mode must be one of 1..{ndim}, got {mode!r}")


def vec(x: np.ndarray) -> np.ndarray:
    return np.asarray(x).reshape(-1, order="F")


def unfold(t: np.ndarray, mode: int) -> np.ndarray:
    """Mode-``mode`` matricization (1-based) of a tensor of any order."""
    t = np.asarray(t)
    _check_mode(mode, t.ndim)
    return np.moveaxis(t, mode - 1, 0).reshape(t.shape[mode - 1], -1, order="F")


def fold(m: np.ndarray, mode: int, shape: Sequence[int]) -> np.ndarray:
    """Inverse of :func:`unfold`."""
    shape = tuple(shape)
    _check_mode(mode, len(shape))
    moved = (shape[mode - 1],) + shape[: mode - 1] + shape[mode:]
    return np.moveaxis(np.asarray(m).reshape(moved, order="F"), 0, mode - 1)


def khatri_rao(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Column-wise Kronecker product; column l is ``kron(x[:, l], y[:, l])``."""
    x = np.asarray(x)
    y = np.asarray(y)
    if x.ndim != 2 or y.ndim != 2 or x.shape[1] != y.shape[1]:
        raise ShapeMismatch(f"khatri_rao needs equal column counts, got {x.shape} and {y.shape}")
    return (x[:, None, :] * y[None, :, :]).reshape(x.shape[0] * y.shape[0], x.shape[1])


def khatri_rao_chain(*mats: np.ndarray) -> np.ndarray:
    return reduce(khatri_rao, mats)


def cp_tensor(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """sum_l a_l o b_l o c_l."""
    a, b, c = map(np.asarray, (a, b, c))
    if not (a.shape[1] == b.shape[1] == c.shape[1]):
        raise ShapeMismatch("factor matrices must share the column count")
    return np.einsum("il,jl,kl->ijk", a, b, c)


def vec_index_maps(q: int, p: int, t: int, dims: Sequence[int]) -> tuple[int, int, int]:
    """Positions (1-based) of entry (q, t, p) inside vec(W_(1)^H), vec(W_(2)^H), vec(W_(3)^H).

    ``dims`` is (Q, T_a, P). Note the argument order (q, p, t).
    """
    Q, T, P = dims
    if not (1 <= q <= Q and 1 <= t <= T and 1 <= p <= P):
        raise IndexOutOfRange(f"(q, t, p) = ({q}, {t}, {p}) outside {tuple(dims)}")
    i1 = (p - 1) * T + t + (q - 1) * P * T
    i2 = (p - 1) * Q + q + (t - 1) * P * Q
    i3 = (t - 1) * Q + q + (p - 1) * Q * T
    return i1, i2, i3


def vec_index_arrays(dims: Sequence[int]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """0-based index arrays for all entries, ordered by the native layout (q fastest, then t, then p)."""
    Q, T, P = dims
    q, t, p = np.meshgrid(np.arange(Q), np.arange(T), np.arange(P), indexing="ij")
    q, t, p = (vec(x) for x in (q, t, p))
    i1 = p * T + t + q * P * T
    i2 = p * Q + q + t * P * Q
    i3 = t * Q + q + p * Q * T
    return i1, i2, i3


def superdiagonal(order: int, size: int, dtype=float) -> np.ndarray:
    """Order-``order`` tensor of side ``size`` with ones on the superdiagonal."""
    out = np.zeros((size,) * order, dtype=dtype)
    idx = np.arange(size)
    out[(idx,) * order] = 1
    return out


def nmode_product(t: np.ndarray, m: np.ndarray, mode: int) -> np.ndarray:
    """``t x_mode m``: contracts axis ``mode`` of t with the columns of m."""
    t = np.asarray(t)
    m = np.asarray(m)
    _check_mode(mode, t.ndim)
    if m.ndim != 2 or m.shape[1] != t.shape[mode - 1]:
        raise ShapeMismatch(f"cannot multiply mode {mode} of size {t.shape[mode - 1]} by {m.shape}")
    return np.moveaxis(np.tensordot(m, t, axes=(1, mode - 1)), 0, mode - 1)


def nmode_product_chain(core: np.ndarray, factors: Sequence[np.ndarray]) -> np.ndarray:
    """Apply ``core x_1 F_1 x_2 F_2 ...`` and drop trailing singleton modes.

    With ``core = superdiagonal(4, L)`` and factors ``[A_R, conj(A_U), C, gamma[None, :]]``
    this yields the N_r x N_t x P channel tensor.
    """
    if len(factors) != np.ndim(core):
        raise ShapeMismatch("need one factor per core mode")
    out = np.asarray(core)
    for n, f in enumerate(factors, start=1):
        out = nmode_product(out, f, n)
    while out.ndim > 3 and out.shape[-1] == 1:
        out = out[..., 0]
    return out
