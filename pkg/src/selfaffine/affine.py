"""Singular values and the singular value function of linear maps.

Everything here is value-level and stateless. Quantities that are products
over long words are handled in log-space; the helpers at the bottom compute
``log phi^j`` for integer ``j`` through exterior powers, which only needs the
*largest* singular value of a product and therefore stays accurate when the
condition number of the product exceeds ``1/eps``.
"""

from __future__ import annotations

import math
from itertools import combinations
from typing import Sequence

import numpy as np

__all__ = [
    "as_matrix",
    "singular_values",
    "log_singular_values",
    "phi_s",
    "log_phi_s",
    "log_phi_from_integer_levels",
    "word_matrix",
    "compound_matrix",
    "top_singular_values",
    "product_levels",
    "is_similitude",
    "operator_norm",
]


def as_matrix(M) -> np.ndarray:
    """Coerce ``M`` to a square float matrix, rejecting anything else."""
    A = np.asarray(M, dtype=float)
    if A.ndim == 0:
        A = A.reshape(1, 1)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    return A


def singular_values(M) -> np.ndarray:
    """Singular values of ``M`` sorted non-increasing.

    Raises
    ------
    ValueError
        If ``M`` is not square, has non-finite entries, or is singular.
    """
    A = as_matrix(M)
    sv = np.linalg.svd(A, compute_uv=False)
    if sv[-1] <= sv[0] * A.shape[0] * np.finfo(float).eps:
        raise ValueError(f"matrix is singular (smallest singular value {sv[-1]:.3g})")
    return sv


def log_singular_values(M) -> np.ndarray:
    return np.log(singular_values(M))


def operator_norm(M) -> float:
    return float(singular_values(M)[0])


def _check_s(s: float) -> float:
    s = float(s)
    if not s >= 0.0:
        raise ValueError(f"singular value function needs s >= 0, got {s}")
    return s


def log_phi_s(log_sv, s: float):
    """``log phi^s`` from log singular values (last axis sorted non-increasing).

    Works on a single profile of shape ``(d,)`` or a batch ``(..., d)``.
    Integer ``s = k`` uses the branch ``k - 1 < s <= k``.
    """
    s = _check_s(s)
    L = np.asarray(log_sv, dtype=float)
    d = L.shape[-1]
    if s == 0.0:
        return np.zeros(L.shape[:-1]) if L.ndim > 1 else 0.0
    cum = np.cumsum(L, axis=-1)
    if s >= d:
        out = (s / d) * cum[..., d - 1]
    else:
        k = math.ceil(s)
        head = cum[..., k - 2] if k >= 2 else 0.0
        out = head + (s - k + 1) * L[..., k - 1]
    return out if L.ndim > 1 else float(out)


def phi_s(M, s: float) -> float:
    """Singular value function ``phi^s(M)``; ``phi^0 = 1``.

    >>> round(phi_s(np.diag([0.4, 0.2]), 1.5), 5)
    0.17889
    """
    s = _check_s(s)
    if s == 0.0:
        return 1.0
    return math.exp(log_phi_s(log_singular_values(M), s))


def log_phi_from_integer_levels(levels, s: float):
    """``log phi^s`` given ``levels[..., j] = log phi^j`` for ``j = 0..d``.

    This is the same piecewise-linear interpolation as :func:`log_phi_s`, fed
    with cumulative sums instead of individual singular values.
    """
    s = _check_s(s)
    G = np.asarray(levels, dtype=float)
    d = G.shape[-1] - 1
    if s >= d:
        return (s / d) * G[..., d]
    k = math.ceil(s)
    if k == 0:
        return G[..., 0]
    return G[..., k - 1] + (s - k + 1) * (G[..., k] - G[..., k - 1])


def word_matrix(T_list: Sequence, word: Sequence[int]) -> np.ndarray:
    """Product ``T_{i_1} T_{i_2} ... T_{i_k}`` for a word of 0-based indices.

    The empty word gives the identity.
    """
    mats = [as_matrix(T) for T in T_list]
    if not mats:
        raise ValueError("need at least one linear map")
    d = mats[0].shape[0]
    out = np.eye(d)
    for i in word:
        if not 0 <= int(i) < len(mats):
            raise IndexError(f"word letter {i} out of range for {len(mats)} maps")
        out = out @ mats[int(i)]
    return out


def compound_matrix(M, k: int) -> np.ndarray:
    """k-th exterior power (compound matrix) of ``M``.

    Entries are the k x k minors with row/column subsets in lexicographic
    order. Accepts a batch ``(..., d, d)``. Cauchy-Binet gives
    ``C_k(AB) = C_k(A) C_k(B)`` and ``||C_k(M)||_2 = alpha_1 ... alpha_k``.
    """
    A = np.asarray(M, dtype=float)
    d = A.shape[-1]
    if not 1 <= k <= d:
        raise ValueError(f"compound order must be in 1..{d}, got {k}")
    if k == 1:
        return A.copy()
    subsets = list(combinations(range(d), k))
    n = len(subsets)
    out = np.empty(A.shape[:-2] + (n, n))
    for a, rows in enumerate(subsets):
        R = A[..., list(rows), :]
        for b, cols in enumerate(subsets):
            out[..., a, b] = np.linalg.det(R[..., :, list(cols)])
    return out


def top_singular_values(X) -> np.ndarray:
    """Largest singular value of each matrix in a batch ``(N, n, n)``."""
    X = np.asarray(X, dtype=float)
    n = X.shape[-1]
    if n == 1:
        return np.abs(X[..., 0, 0])
    if n == 2:
        a, b = X[..., 0, 0], X[..., 0, 1]
        c, e = X[..., 1, 0], X[..., 1, 1]
        fro = a * a + b * b + c * c + e * e
        det = a * e - b * c
        disc = np.sqrt(np.maximum(fro * fro - 4.0 * det * det, 0.0))
        return np.sqrt(0.5 * (fro + disc))
    if n == 3:
        return np.sqrt(_top_eig_sym3(X @ np.swapaxes(X, -1, -2)))
    return np.linalg.svd(X, compute_uv=False)[..., 0]


def _top_eig_sym3(G: np.ndarray) -> np.ndarray:
    """Largest eigenvalue of symmetric PSD 3x3 batches (trigonometric form).

    Near a repeated top eigenvalue (``r -> -1``) arccos loses half the digits,
    so those entries are recomputed with ``eigvalsh``.
    """
    q = (G[..., 0, 0] + G[..., 1, 1] + G[..., 2, 2]) / 3.0
    off = G[..., 0, 1] ** 2 + G[..., 0, 2] ** 2 + G[..., 1, 2] ** 2
    diag = (G[..., 0, 0] - q) ** 2 + (G[..., 1, 1] - q) ** 2 + (G[..., 2, 2] - q) ** 2
    p = np.sqrt((diag + 2.0 * off) / 6.0)
    safe = np.where(p > 0, p, 1.0)
    B = (G - q[..., None, None] * np.eye(3)) / safe[..., None, None]
    r = np.clip(np.linalg.det(B) / 2.0, -1.0, 1.0)
    top = np.where(p > 0, q + 2.0 * p * np.cos(np.arccos(r) / 3.0), q)
    bad = (r < -1.0 + 1e-6) & (p > 0)
    if np.any(bad):
        top = np.array(top, copy=True)
        top[bad] = np.linalg.eigvalsh(G[bad])[..., -1]
    return top


def product_levels(factors: Sequence) -> np.ndarray:
    """``log phi^j(M_1 ... M_n)`` for ``j = 0..d`` from the factors, batched.

    Each factor is ``(..., d, d)``. Level ``j < d`` is the log top singular value
    of ``C_j(M_1) ... C_j(M_n)``; level ``d`` is the sum of ``log |det M_i|``, so
    the product is never formed at the top level where its smallest singular
    value would be swamped by rounding. A single factor gives its own levels.
    """
    mats = [np.asarray(M, dtype=float) for M in factors]
    if not mats:
        raise ValueError("need at least one factor")
    d = mats[0].shape[-1]
    out = np.zeros(np.broadcast_shapes(*[M.shape[:-2] for M in mats]) + (d + 1,))
    for j in range(1, d):
        P = compound_matrix(mats[0], j)
        for M in mats[1:]:
            P = P @ compound_matrix(M, j)
        out[..., j] = np.log(top_singular_values(P))
    out[..., d] = sum(np.linalg.slogdet(M)[1] for M in mats)
    return out


def is_similitude(M, rtol: float = 1e-10) -> bool:
    """True when all singular values of ``M`` coincide."""
    sv = singular_values(M)
    return bool(sv[0] - sv[-1] <= rtol * sv[0])
