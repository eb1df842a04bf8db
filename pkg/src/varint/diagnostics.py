"""Hessian of the discrete action and sufficient conditions for the relaxation to converge."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import List

import numpy as np

from .core import (
    DiscreteLagrangianModel,
    InvalidArgument,
    ModelError,
    SingularDiagonalBlock,
    Trajectory,
)

THEOREM_SATISFIED = "TheoremSatisfied"
GLOBAL_PD_ONLY = "GlobalPDOnly"
SPECTRAL_ONLY = "SpectralOnly"
NO_GUARANTEE = "NoGuarantee"


@dataclass
class BlockTridiagonalHessian:
    """Symmetric block-tridiagonal matrix with diagonal blocks ``diag[i]`` (node ``i+1``)
    and super-diagonal blocks ``offdiag[i]`` coupling nodes ``i+1`` and ``i+2``."""

    diag: np.ndarray
    offdiag: np.ndarray
    gamma: int
    dim: int
    N: int

    def dense(self) -> np.ndarray:
        m, d = self.diag.shape[0], self.diag.shape[1]
        H = np.zeros((m * d, m * d))
        for i in range(m):
            H[i * d : (i + 1) * d, i * d : (i + 1) * d] = self.diag[i]
        for i in range(m - 1):
            H[i * d : (i + 1) * d, (i + 1) * d : (i + 2) * d] = self.offdiag[i]
            H[(i + 1) * d : (i + 2) * d, i * d : (i + 1) * d] = self.offdiag[i].T
        return H

    def matvec(self, v: np.ndarray) -> np.ndarray:
        """``H v`` with ``v`` shaped ``(N-1, d)``."""
        out = np.einsum("kij,kj->ki", self.diag, v)
        if len(self.offdiag):
            out[:-1] += np.einsum("kij,kj->ki", self.offdiag, v[1:])
            out[1:] += np.einsum("kji,kj->ki", self.offdiag, v[:-1])
        return out


@dataclass
class ConvergenceReport:
    per_step_psd: List[bool]
    per_step_min_eig: List[float]
    all_A_pd: bool
    all_B_pd: bool
    global_pd: bool
    spectral_radius_estimate: float
    guarantee: str
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def per_step_hessian(model: DiscreteLagrangianModel, k, x0, x1) -> np.ndarray:
    """``[[A_k, C_k], [C_k^T, B_k]]``: Hessian of ``L_{d,k}`` in both end nodes."""
    return model.hessian(k, x0, x1)


def _interval_hessians(model, traj):
    q = traj.nodes
    try:
        _, _, A, C, B = model.derivatives(np.arange(traj.N), q[:-1], q[1:])
    except (FloatingPointError, ValueError, ZeroDivisionError) as exc:
        raise ModelError(str(exc)) from exc
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B)) and np.all(np.isfinite(C))):
        raise ModelError("non-finite second derivatives along the trajectory")
    return A, C, B


def _hessian_blocks(A, C, B, traj, mask=None):
    diag = B[:-1] + A[1:]
    diag = 0.5 * (diag + np.swapaxes(diag, 1, 2))
    off = C[1:-1].copy()
    if mask is not None:
        # pinned components (knots): identity rows, no coupling -- the
        # restriction of the Hessian to the free components, padded
        free = np.asarray(mask, dtype=bool)[1:-1]
        fixed = ~free
        both = free[:, :, None] & free[:, None, :]
        diag = np.where(both, diag, 0.0)
        idx = np.nonzero(fixed)
        diag[idx[0], idx[1], idx[1]] = 1.0
        off = np.where(free[:-1, :, None] & free[1:, None, :], off, 0.0)
    return BlockTridiagonalHessian(diag, off, traj.gamma, traj.dim, traj.N)


def assemble_hessian(model: DiscreteLagrangianModel, traj: Trajectory, mask=None) -> BlockTridiagonalHessian:
    """Block-tridiagonal Hessian of the discrete action in the interior nodes.

    ``mask`` (shape ``(N+1, gamma*dim)``, True = free) restricts it to the
    free components, as for interpolation knots.
    """
    if traj.N < 2:
        raise InvalidArgument("need N >= 2")
    A, C, B = _interval_hessians(model, traj)
    return _hessian_blocks(A, C, B, traj, mask)


def _pd_by_ldlt(M: np.ndarray, tol: float) -> bool:
    """Unpivoted symmetric elimination; PD iff every pivot exceeds ``tol``."""
    M = np.array(M, dtype=float)
    n = M.shape[0]
    for i in range(n):
        p = M[i, i]
        if not p > tol:
            return False
        M[i + 1 :, i + 1 :] -= np.outer(M[i + 1 :, i], M[i, i + 1 :]) / p
    return True


def block_ldlt_pd(H: BlockTridiagonalHessian, tol: float = 0.0) -> bool:
    """Positive-definiteness of a block-tridiagonal matrix by the Schur recurrence.

    ``S_1 = D_1``, ``S_{k+1} = D_{k+1} - C_k^T S_k^{-1} C_k``; the matrix is PD
    iff every ``S_k`` is.
    """
    S = H.diag[0]
    for k in range(H.diag.shape[0]):
        if k > 0:
            C = H.offdiag[k - 1]
            S = H.diag[k] - C.T @ np.linalg.solve(S, C)
            S = 0.5 * (S + S.T)
        try:
            np.linalg.cholesky(S)
        except np.linalg.LinAlgError:
            return False
        if tol > 0 and np.min(np.linalg.eigvalsh(S)) <= tol:
            return False
    return True


def spectral_radius_jacobi(H: BlockTridiagonalHessian, iters: int = 200, rtol: float = 1e-8) -> float:
    """Power-iteration estimate of the spectral radius of ``J = -D^{-1} C``.

    ``D`` is the block diagonal of ``H`` and ``C`` its off-diagonal part.  The
    spectrum of a block-tridiagonal Jacobi matrix is symmetric about zero, so
    the iteration runs on ``J^2`` and takes a square root.
    """
    m, d = H.diag.shape[0], H.diag.shape[1]
    if m == 1 or len(H.offdiag) == 0:
        return 0.0
    lu = []
    for k in range(m):
        Dk = H.diag[k]
        cond = np.linalg.cond(Dk)
        if not np.isfinite(cond) or cond > 1e15:
            raise SingularDiagonalBlock(k + 1)
        lu.append(Dk)
    Dstack = np.array(lu)

    def J(v):
        w = np.zeros_like(v)
        w[:-1] += np.einsum("kij,kj->ki", H.offdiag, v[1:])
        w[1:] += np.einsum("kji,kj->ki", H.offdiag, v[:-1])
        return -np.linalg.solve(Dstack, w[..., None])[..., 0]

    rng = np.random.default_rng(12345)
    v = rng.standard_normal((m, d))
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iters):
        w = J(J(v))
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        new = np.sqrt(nw)
        v = w / nw
        if est > 0 and abs(new - est) <= rtol * est:
            est = new
            break
        est = new
    return float(est)


def check_theorem_conditions(
    model: DiscreteLagrangianModel, traj: Trajectory, tol_psd: float | None = None, mask=None
) -> ConvergenceReport:
    """Evaluate the single-step sufficient conditions and the global ones.

    Per interval: the symmetrised Hessian of ``L_{d,k}`` is PSD when its least
    eigenvalue is ``>= -tol`` with ``tol = tol_psd`` or, by default,
    ``1e-9 |H_k|_inf``.  ``A_k`` is tested for ``k = 1..N-1`` and ``B_k`` for
    ``k = 0..N-2``, the blocks that touch interior nodes.  With a free-component
    ``mask`` the global positive-definiteness and the spectral radius refer to
    the Hessian restricted to the free components.
    """
    A, C, B = _interval_hessians(model, traj)
    N = traj.N
    psd, mins = [], []
    for k in range(N):
        Hk = np.block([[A[k], C[k]], [C[k].T, B[k]]])
        Hk = 0.5 * (Hk + Hk.T)
        scale = np.max(np.sum(np.abs(Hk), axis=1))
        tol = tol_psd if tol_psd is not None else 1e-9 * scale
        lam = float(np.min(np.linalg.eigvalsh(Hk)))
        mins.append(lam)
        psd.append(bool(lam >= -tol))

    def pd(M):
        M = 0.5 * (M + M.T)
        scale = np.max(np.sum(np.abs(M), axis=1))
        tol = tol_psd if tol_psd is not None else 1e-9 * scale
        return _pd_by_ldlt(M, tol)

    all_A = all(pd(A[k]) for k in range(1, N))
    all_B = all(pd(B[k]) for k in range(0, N - 1))
    H = _hessian_blocks(A, C, B, traj, mask)
    global_pd = block_ldlt_pd(H)
    notes = []
    try:
        rho = spectral_radius_jacobi(H)
    except SingularDiagonalBlock as exc:
        rho = float("inf")
        notes.append(str(exc))
    if all(psd) and (all_A or all_B):
        guarantee = THEOREM_SATISFIED
    elif global_pd:
        guarantee = GLOBAL_PD_ONLY
    elif rho < 1:
        guarantee = SPECTRAL_ONLY
    else:
        guarantee = NO_GUARANTEE
    return ConvergenceReport(psd, mins, all_A, all_B, global_pd, rho, guarantee, notes)
