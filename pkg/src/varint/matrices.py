"""The ``gamma x gamma`` matrices that organise Hessians of higher-order discrete Lagrangians by powers of ``h``.

Rows and columns are indexed ``0 .. gamma-1`` by derivative degree.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np
import scipy.linalg

from .core import InvalidArgument, VarintError

MAX_GAMMA = 20


def _check(gamma, h):
    if int(gamma) != gamma or gamma < 1 or gamma > MAX_GAMMA:
        raise InvalidArgument(f"gamma must be an integer in [1, {MAX_GAMMA}]")
    if h == 0 or not np.isfinite(h):
        raise InvalidArgument("h must be finite and nonzero")
    return int(gamma), float(h)


def _fact(gamma):
    return np.array([float(factorial(i)) for i in range(2 * gamma + 1)])


@dataclass
class GammaMatrixSet:
    gamma: int
    h: float
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    E: np.ndarray


def matrix_A(gamma, h):
    gamma, h = _check(gamma, h)
    f = _fact(gamma)
    A = np.zeros((gamma, gamma))
    for a in range(gamma):
        for b in range(a, gamma):
            A[a, b] = h ** (b - a) / f[b - a]
    return A


def matrix_B(gamma, h):
    gamma, h = _check(gamma, h)
    f = _fact(gamma)
    B = np.empty((gamma, gamma))
    for a in range(gamma):
        for b in range(gamma):
            p = 2 * gamma - a - b - 1
            B[a, b] = h**p / f[p]
    return B


def matrix_C(gamma, h):
    gamma, h = _check(gamma, h)
    f = _fact(gamma)
    C = np.empty((gamma, gamma))
    for a in range(gamma):
        for b in range(gamma):
            p = 2 * gamma - a - b - 1
            C[a, b] = h**p / (p * f[gamma - a - 1] * f[gamma - b - 1])
    return C


def matrix_D(gamma):
    return np.diag([(-1.0) ** (gamma - a - 1) for a in range(gamma)])


def matrix_E(gamma):
    return np.fliplr(np.eye(gamma))


def build_matrices(gamma: int, h: float) -> GammaMatrixSet:
    gamma, h = _check(gamma, h)
    return GammaMatrixSet(
        gamma, h, matrix_A(gamma, h), matrix_B(gamma, h), matrix_C(gamma, h),
        matrix_D(gamma), matrix_E(gamma),
    )


def _rel(x, y):
    scale = max(np.max(np.abs(y)), np.finfo(float).tiny)
    return float(np.max(np.abs(x - y)) / scale)


def verify_identities(ms: GammaMatrixSet, rtol: float = 1e-12) -> dict:
    """Check the algebraic identities linking A, B, C and D.

    Every deviation is a max-abs difference relative to the max-abs entry of
    the right-hand side.  The returned dict maps identity name to
    ``{"deviation": float, "passed": bool}``.
    """
    g, h = ms.gamma, ms.h
    A, B, C, D = ms.A, ms.B, ms.C, ms.D
    Am, Bm, Cm = matrix_A(g, -h), matrix_B(g, -h), matrix_C(g, -h)
    # A(-h) A(h) = I is the inverse statement without forming an inverse.
    dev = {
        "A(-h) = D A(h) D = A(h)^-1": max(_rel(Am, D @ A @ D), _rel(Am @ A, np.eye(g))),
        "B(-h) = -D B(h) D": _rel(Bm, -D @ B @ D),
        "C(h) = A(h) D B(h)": _rel(C, A @ D @ B),
        "C(h) = -D C(-h) D": _rel(C, -D @ Cm @ D),
    }
    return {k: {"deviation": v, "passed": v <= rtol} for k, v in dev.items()}


def lu_factors_C(gamma: int, h: float):
    """Closed-form LU factors of ``C(h)``: ``L`` unit lower, ``U`` upper triangular."""
    gamma, h = _check(gamma, h)
    f = _fact(gamma)
    g = gamma
    L = np.zeros((g, g))
    U = np.zeros((g, g))
    for a in range(g):
        for b in range(a + 1):
            L[a, b] = (
                h ** (b - a) * f[a] * f[2 * g - b - 1] * f[g - b - 1] * f[2 * g - a - b - 2]
                / (f[b] * f[a - b] * f[2 * g - a - 1] * f[g - a - 1] * f[2 * g - 2 * b - 2])
            )
        for b in range(a, g):
            U[a, b] = (
                h ** (2 * g - a - b - 1) * f[a] * f[b] * f[2 * g - 2 * a - 1] * f[2 * g - a - b - 2]
                / (f[b - a] * f[2 * g - a - 1] * f[2 * g - b - 1] * f[g - a - 1] * f[g - b - 1])
            )
    return L, U


def u_diagonal(gamma: int, h: float) -> np.ndarray:
    gamma, h = _check(gamma, h)
    f = _fact(gamma)
    g = gamma
    return np.array([
        h ** (2 * g - 2 * a - 1) * f[a] ** 2 * f[2 * g - 2 * a - 2] * f[2 * g - 2 * a - 1]
        / (f[g - a - 1] ** 2 * f[2 * g - a - 1] ** 2)
        for a in range(g)
    ])


def det_C(gamma: int, h: float) -> float:
    gamma, h = _check(gamma, h)
    f = _fact(gamma)
    prod = 1.0
    for a in range(gamma):
        prod *= f[a] / f[gamma + a]
    return h ** (gamma * gamma) * prod


def det_B(gamma: int, h: float) -> float:
    gamma, h = _check(gamma, h)
    sign = -1.0 if (gamma * (gamma - 1) // 2) % 2 else 1.0
    return sign * det_C(gamma, h)


def leading_hessian_blocks(gamma: int, h: float) -> np.ndarray:
    """Coefficient matrix of the leading terms of the exact discrete Lagrangian's Hessian.

    ``[[D B(h)^-1 A(h), -D B(h)^-1], [D B(-h)^-1, -D B(-h)^-1 A(-h)]]``, to be
    tensored with the Hessian of ``L`` in the highest derivative.
    """
    gamma, h = _check(gamma, h)
    A, B, D = matrix_A(gamma, h), matrix_B(gamma, h), matrix_D(gamma)
    Am, Bm = matrix_A(gamma, -h), matrix_B(gamma, -h)
    try:
        lu, lu_m = scipy.linalg.lu_factor(B), scipy.linalg.lu_factor(Bm)
    except (ValueError, np.linalg.LinAlgError) as exc:  # pragma: no cover
        raise VarintError("B(h) is singular") from exc
    solve = scipy.linalg.lu_solve
    I = np.eye(gamma)
    top = np.hstack([D @ solve(lu, A), -D @ solve(lu, I)])
    bottom = np.hstack([D @ solve(lu_m, I), -D @ solve(lu_m, Am)])
    return np.vstack([top, bottom])
