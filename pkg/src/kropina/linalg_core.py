"""Small dense linear algebra: Cholesky positivity tests and the canonical
block normal form of real skew-symmetric matrices.

Dimensions here never exceed ~10, so clarity wins over blocking/BLAS tricks.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.linalg import schur

from .exceptions import InputError

PIVOT_RTOL = 1e-13

J2 = np.array([[0.0, 1.0], [-1.0, 0.0]])


def _as_square(M, name: str = "matrix") -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InputError(f"{name} must be square, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise InputError(f"{name} has non-finite entries")
    return M


def as_symmetric(M, name: str = "matrix", atol: float = 1e-12) -> np.ndarray:
    """Validate ``M`` as symmetric and return an exactly symmetric copy."""
    M = _as_square(M, name)
    scale = max(1.0, float(np.max(np.abs(M))))
    if np.max(np.abs(M - M.T)) > atol * scale:
        raise InputError(f"{name} is not symmetric")
    return 0.5 * (M + M.T)


def as_skew(M, name: str = "matrix", atol: float = 1e-12) -> np.ndarray:
    """Validate ``M`` as skew-symmetric and return an exactly skew copy."""
    M = _as_square(M, name)
    scale = max(1.0, float(np.max(np.abs(M))))
    if np.max(np.abs(M + M.T)) > atol * scale:
        raise InputError(f"{name} is not skew-symmetric")
    return 0.5 * (M - M.T)


class CholeskyResult(NamedTuple):
    is_pd: bool
    factor: Optional[np.ndarray]


def cholesky_pd(M) -> CholeskyResult:
    """Cholesky factorisation doubling as a positive-definiteness test.

    Returns ``CholeskyResult(True, L)`` with ``L @ L.T == M`` when every pivot
    exceeds ``1e-13 * max(diag(M))``; otherwise ``CholeskyResult(False, None)``.

    Raises:
        InputError: if ``M`` is not square, symmetric and finite.
    """
    M = as_symmetric(M)
    n = M.shape[0]
    tol = PIVOT_RTOL * max(float(np.max(np.diag(M))), 0.0)
    L = np.zeros_like(M)
    for j in range(n):
        pivot = M[j, j] - L[j, :j] @ L[j, :j]
        if not pivot > tol or pivot <= 0.0:
            return CholeskyResult(False, None)
        L[j, j] = np.sqrt(pivot)
        for i in range(j + 1, n):
            L[i, j] = (M[i, j] - L[i, :j] @ L[j, :j]) / L[j, j]
    return CholeskyResult(True, L)


def is_positive_definite(M) -> bool:
    return cholesky_pd(M).is_pd


@dataclass(frozen=True)
class SkewNormalForm:
    """Orthogonal normal form ``B.T @ Omega @ B = a_1 J (+) ... (+) a_m J [(+) 0]``.

    Attributes:
        blocks: block values sorted ``a_1 >= ... >= a_m >= 0``.
        residual_zero: True for odd dimension (trailing 1x1 zero block).
        transform: the orthogonal matrix ``B``.
    """

    blocks: np.ndarray
    residual_zero: bool
    transform: np.ndarray

    def block_matrix(self) -> np.ndarray:
        m = len(self.blocks)
        n = 2 * m + int(self.residual_zero)
        out = np.zeros((n, n))
        for k, a in enumerate(self.blocks):
            out[2 * k:2 * k + 2, 2 * k:2 * k + 2] = a * J2
        return out


def skew_normal_form(Omega) -> SkewNormalForm:
    """Canonical block form of a real skew-symmetric matrix.

    Uses the real Schur decomposition; for a normal matrix the quasi-triangular
    factor is block diagonal, so each 2x2 block ``[[0, s], [-s, 0]]`` gives a
    block value ``|s|`` (columns are swapped when ``s < 0``). Leftover 1x1 zero
    blocks are paired into ``a = 0`` blocks.
    """
    Omega = as_skew(Omega, "Omega")
    n = Omega.shape[0]
    T, Z = schur(Omega, output="real")

    pairs = []  # (value, col_i, col_j) with B[:, [i, j]] spanning the block
    zeros = []
    k = 0
    while k < n:
        if k + 1 < n and abs(T[k + 1, k]) > 0.0:
            # 2x2 block; standardise to [[0, s], [-s, 0]] by an in-plane rotation
            blk = T[k:k + 2, k:k + 2]
            s = 0.5 * (blk[0, 1] - blk[1, 0])
            i, j = k, k + 1
            if s < 0:
                i, j = j, i
            pairs.append((abs(s), i, j))
            k += 2
        else:
            zeros.append(k)
            k += 1

    while len(zeros) >= 2:
        i, j = zeros.pop(0), zeros.pop(0)
        pairs.append((0.0, i, j))

    pairs.sort(key=lambda p: -p[0])
    cols = [c for _, i, j in pairs for c in (i, j)] + zeros
    B = Z[:, cols]
    blocks = np.array([p[0] for p in pairs])
    return SkewNormalForm(blocks=blocks, residual_zero=bool(zeros), transform=B)


def rotation_to_first_axis(c) -> np.ndarray:
    """A rotation ``R`` in SO(n) with ``R @ c = |c| e_1``.

    Built from a Householder reflection composed with a coordinate reflection
    so the determinant is +1.
    """
    c = np.asarray(c, dtype=float)
    n = c.size
    norm = np.linalg.norm(c)
    if norm == 0.0:
        raise InputError("cannot rotate the zero vector")
    e1 = np.zeros(n)
    e1[0] = 1.0
    u = c / norm
    v = u - e1
    if np.linalg.norm(v) < 1e-15:
        return np.eye(n)
    v /= np.linalg.norm(v)
    H = np.eye(n) - 2.0 * np.outer(v, v)  # reflection, H u = e1
    if n == 1:
        return H
    # flip an axis orthogonal to e1 to land in SO(n)
    D = np.eye(n)
    D[-1, -1] = -1.0
    return D @ H


def random_orthogonal(n: int, rng: np.random.Generator, special: bool = False) -> np.ndarray:
    """Haar-distributed orthogonal matrix (QR of a Gaussian with sign fix)."""
    A = rng.standard_normal((n, n))
    Q, R = np.linalg.qr(A)
    Q = Q * np.sign(np.diag(R))
    if special and np.linalg.det(Q) < 0:
        Q[:, 0] = -Q[:, 0]
    return Q
