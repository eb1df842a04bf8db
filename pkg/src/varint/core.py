"""Trajectories, boundary data and the discrete-Lagrangian contract.

A node of a trajectory of a ``gamma``-th order system on ``R^n`` is a flat
vector of length ``gamma * n`` laid out as ``gamma`` contiguous blocks
``(q, q', ..., q^(gamma-1))``.  A trajectory stores its ``N + 1`` nodes as
the rows of a ``(N + 1, gamma * n)`` array.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np


class VarintError(Exception):
    """Base class of the package's exceptions."""


class InvalidArgument(VarintError, ValueError):
    pass


class InvalidBoundary(VarintError, ValueError):
    pass


class ModelError(VarintError):
    pass


class OracleError(VarintError):
    pass


class SingularDiagonalBlock(VarintError):
    def __init__(self, k):
        super().__init__(f"singular diagonal block at node {k}")
        self.k = k


class DivergedAtNode(VarintError):
    def __init__(self, k):
        super().__init__(f"non-finite update at node {k}")
        self.k = k


class RefinementKnotClash(VarintError):
    pass


class DriftTooStrong(VarintError, ValueError):
    """The drift field reaches unit speed, so the Randers metric degenerates."""


class SingularPotential(VarintError):
    pass


class InvalidMonitor(VarintError):
    def __init__(self, k):
        super().__init__(f"non-positive monitor value on interval {k}")
        self.k = k


# ---------------------------------------------------------------------------
# data model
# ---------------------------------------------------------------------------


def as_node(data, gamma: int, dim: int) -> np.ndarray:
    """Validate and return a node as a float array of length ``gamma*dim``."""
    x = np.array(data, dtype=float).reshape(-1)
    if x.size != gamma * dim:
        raise InvalidArgument(f"node has length {x.size}, expected {gamma * dim}")
    if not np.all(np.isfinite(x)):
        raise InvalidArgument("node contains non-finite entries")
    return x


@dataclass
class Trajectory:
    nodes: np.ndarray
    times: np.ndarray
    gamma: int
    dim: int

    def __post_init__(self):
        self.nodes = np.array(self.nodes, dtype=float)
        if self.nodes.ndim == 1:
            self.nodes = self.nodes.reshape(-1, 1)
        self.times = np.array(self.times, dtype=float).reshape(-1)
        if self.gamma < 1 or self.dim < 1:
            raise InvalidArgument("gamma and dim must be positive")
        if self.nodes.shape[1] != self.gamma * self.dim:
            raise InvalidArgument(
                f"nodes have width {self.nodes.shape[1]}, expected {self.gamma * self.dim}"
            )
        if self.times.size != self.nodes.shape[0]:
            raise InvalidArgument("times and nodes disagree in length")
        if np.any(np.diff(self.times) <= 0):
            raise InvalidArgument("times must be strictly increasing")

    @property
    def N(self) -> int:
        return self.nodes.shape[0] - 1

    @property
    def positions(self) -> np.ndarray:
        return self.nodes[:, : self.dim]

    def block(self, alpha: int) -> np.ndarray:
        """Derivative block of degree ``alpha`` for every node."""
        return self.nodes[:, alpha * self.dim : (alpha + 1) * self.dim]

    def copy(self) -> "Trajectory":
        return Trajectory(self.nodes.copy(), self.times.copy(), self.gamma, self.dim)

    def with_nodes(self, nodes) -> "Trajectory":
        return Trajectory(nodes, self.times.copy(), self.gamma, self.dim)

    def with_times(self, times) -> "Trajectory":
        return Trajectory(self.nodes.copy(), times, self.gamma, self.dim)


@dataclass
class Knot:
    """Interior waypoint.  ``full`` pins the whole node, not only its position."""

    index: int
    position: np.ndarray
    full: bool = False

    def __post_init__(self):
        self.position = np.array(self.position, dtype=float).reshape(-1)


@dataclass
class BoundaryData:
    left: np.ndarray
    right: np.ndarray
    knots: list = field(default_factory=list)

    def __post_init__(self):
        self.left = np.array(self.left, dtype=float).reshape(-1)
        self.right = np.array(self.right, dtype=float).reshape(-1)
        self.knots = [k if isinstance(k, Knot) else Knot(*k) for k in self.knots]

    def validate(self, N: int, gamma: int, dim: int) -> None:
        for node in (self.left, self.right):
            if node.size != gamma * dim or not np.all(np.isfinite(node)):
                raise InvalidBoundary("boundary node has wrong length or non-finite data")
        last = 0
        for knot in self.knots:
            if not (last < knot.index < N):
                raise InvalidBoundary(
                    f"knot index {knot.index} must be strictly increasing and inside (0, {N})"
                )
            want = gamma * dim if knot.full else dim
            if knot.position.size != want:
                raise InvalidBoundary(f"knot at {knot.index} has length {knot.position.size}")
            last = knot.index

    def free_mask(self, N: int, gamma: int, dim: int) -> np.ndarray:
        """Boolean ``(N+1, gamma*dim)`` mask of the components a sweep may move."""
        mask = np.ones((N + 1, gamma * dim), dtype=bool)
        mask[0] = mask[N] = False
        for knot in self.knots:
            if knot.full:
                mask[knot.index] = False
            else:
                mask[knot.index, :dim] = False
        return mask

    def impose(self, nodes: np.ndarray) -> np.ndarray:
        nodes = np.array(nodes, dtype=float)
        nodes[0] = self.left
        nodes[-1] = self.right
        for knot in self.knots:
            nodes[knot.index, : knot.position.size] = knot.position
        return nodes


@dataclass
class SolverConfig:
    method: str = "jacobi_newton"
    tol_residual: float = 1e-8
    max_iters: int = 100_000
    damping: float = 0.0
    inner_newton_iters: int = 5
    newton_substeps: int = 1
    refinement: list = field(default_factory=list)
    time_grid_update_period: int = 100
    adaptive_sundman: Optional[str] = None
    sundman_period: int = 1
    diagnostics_every: int = 0
    damping_post_refine: float = 0.5
    post_refine_iters: int = 10

    def __post_init__(self):
        if self.method not in ("jacobi", "jacobi_newton"):
            raise InvalidArgument(f"unknown method {self.method!r}")
        if not self.tol_residual > 0:
            raise InvalidArgument("tol_residual must be positive")
        if not 0 <= self.damping < 1:
            raise InvalidArgument("damping must satisfy 0 <= damping < 1")
        if not 0 <= self.damping_post_refine < 1:
            raise InvalidArgument("damping_post_refine must satisfy 0 <= damping < 1")
        if self.max_iters < 0 or self.inner_newton_iters < 1 or self.newton_substeps < 1:
            raise InvalidArgument("max_iters must be >= 0, inner_newton_iters and newton_substeps >= 1")
        if self.time_grid_update_period < 1 or self.sundman_period < 1:
            raise InvalidArgument("update periods must be >= 1")
        # (target N, sweeps on the previous grid before refining to it)
        self.refinement = [(int(n), int(trigger)) for n, trigger in self.refinement]
        if any(n < 2 or trigger < 0 for n, trigger in self.refinement):
            raise InvalidArgument("refinement levels need N >= 2 and a non-negative iteration trigger")
        if any(n2 <= n1 for (n1, _), (n2, _) in zip(self.refinement, self.refinement[1:])):
            raise InvalidArgument("refinement levels must increase")


# ---------------------------------------------------------------------------
# discrete Lagrangian contract
# ---------------------------------------------------------------------------


def _batch(k, x0, x1):
    x0 = np.asarray(x0, dtype=float)
    x1 = np.asarray(x1, dtype=float)
    single = x0.ndim == 1
    x0 = np.atleast_2d(x0)
    x1 = np.atleast_2d(x1)
    k = np.broadcast_to(np.asarray(k, dtype=int), (x0.shape[0],))
    return single, k, x0, x1


class DiscreteLagrangianModel:
    """A discrete Lagrangian ``L_{d,k}(x0, x1)`` indexed by its interval ``k``.

    Every method accepts either one pair of nodes (``x0``, ``x1`` of shape
    ``(d,)``) or a batch (shape ``(m, d)`` with ``k`` of shape ``(m,)``).
    Subclasses implement :meth:`_eval`, and optionally :meth:`_derivatives`
    with ``derivatives_analytic = True``; otherwise derivatives come from
    central differences.
    """

    derivatives_analytic = False

    def __init__(self, gamma: int, dim: int):
        self.gamma = int(gamma)
        self.dim = int(dim)

    @property
    def width(self) -> int:
        return self.gamma * self.dim

    # -- to be provided by subclasses ------------------------------------
    def _eval(self, k, x0, x1):
        raise NotImplementedError

    def _derivatives(self, k, x0, x1):
        return fd_derivatives(self._eval, k, x0, x1)

    # -- public API ------------------------------------------------------
    def eval(self, k, x0, x1):
        single, k, x0, x1 = _batch(k, x0, x1)
        out = np.asarray(self._eval(k, x0, x1), dtype=float)
        return float(out[0]) if single else out

    def derivatives(self, k, x0, x1):
        """Return ``(g1, g2, H11, H12, H22)`` in one pass."""
        single, k, x0, x1 = _batch(k, x0, x1)
        out = self._derivatives(k, x0, x1)
        if single:
            return tuple(a[0] for a in out)
        return out

    def grad1(self, k, x0, x1):
        return self.derivatives(k, x0, x1)[0]

    def grad2(self, k, x0, x1):
        return self.derivatives(k, x0, x1)[1]

    def hess11(self, k, x0, x1):
        return self.derivatives(k, x0, x1)[2]

    def hess12(self, k, x0, x1):
        return self.derivatives(k, x0, x1)[3]

    def hess22(self, k, x0, x1):
        return self.derivatives(k, x0, x1)[4]

    def hessian(self, k, x0, x1):
        """Full ``2d x 2d`` Hessian ``[[H11, H12], [H12^T, H22]]``."""
        _, _, a, c, b = self.derivatives(k, x0, x1)
        top = np.concatenate([a, c], axis=-1)
        bottom = np.concatenate([np.swapaxes(c, -1, -2), b], axis=-1)
        return np.concatenate([top, bottom], axis=-2)


def fd_derivatives(f, k, x0, x1):
    """Central-difference gradient and Hessian of a batched ``f(k, x0, x1)``.

    Gradient step ``1e-6 (1 + |x|_inf)``, Hessian step ``1e-4 (1 + |x|_inf)``.
    """
    d = x0.shape[1]
    x = np.concatenate([x0, x1], axis=1)
    scale = 1.0 + np.max(np.abs(x), axis=1)

    def F(z):
        return np.asarray(f(k, z[:, :d], z[:, d:]), dtype=float)

    hg = 1e-6 * scale
    grad = np.empty_like(x)
    for i in range(2 * d):
        e = np.zeros_like(x)
        e[:, i] = hg
        grad[:, i] = (F(x + e) - F(x - e)) / (2 * hg)

    hh = 1e-4 * scale
    f0 = F(x)
    hess = np.empty((x.shape[0], 2 * d, 2 * d))
    for i in range(2 * d):
        ei = np.zeros_like(x)
        ei[:, i] = hh
        hess[:, i, i] = (F(x + ei) - 2 * f0 + F(x - ei)) / hh**2
        for j in range(i + 1, 2 * d):
            ej = np.zeros_like(x)
            ej[:, j] = hh
            v = (F(x + ei + ej) - F(x + ei - ej) - F(x - ei + ej) + F(x - ei - ej)) / (4 * hh**2)
            hess[:, i, j] = hess[:, j, i] = v
    return (
        grad[:, :d],
        grad[:, d:],
        hess[:, :d, :d],
        hess[:, :d, d:],
        hess[:, d:, d:],
    )


class FunctionModel(DiscreteLagrangianModel):
    """Wrap plain callables ``eval(k, x0, x1)`` (batched) into a model.

    If ``derivatives`` is given it must return ``(g1, g2, H11, H12, H22)``
    for a batch.
    """

    def __init__(self, gamma, dim, eval, derivatives=None):
        super().__init__(gamma, dim)
        self._f = eval
        self._d = derivatives
        self.derivatives_analytic = derivatives is not None

    def _eval(self, k, x0, x1):
        return self._f(k, x0, x1)

    def _derivatives(self, k, x0, x1):
        if self._d is None:
            return fd_derivatives(self._f, k, x0, x1)
        return self._d(k, x0, x1)


class QuadraticModel(DiscreteLagrangianModel):
    """``L_{d,k}(x) = 1/2 x^T H_k x + g_k^T x + c_k`` with ``x = (x0, x1)``.

    ``H`` is either one ``2d x 2d`` matrix or a stack indexed by ``k``.
    """

    derivatives_analytic = True

    def __init__(self, gamma, dim, H, g=None, c=0.0):
        super().__init__(gamma, dim)
        d2 = 2 * gamma * dim
        H = np.asarray(H, dtype=float)
        self.H = 0.5 * (H + np.swapaxes(H, -1, -2))
        if self.H.shape[-2:] != (d2, d2):
            raise InvalidArgument("Hessian has the wrong shape")
        self.g = np.zeros(d2) if g is None else np.asarray(g, dtype=float)
        self.c = c

    def _pick(self, arr, k, ndim):
        if arr.ndim == ndim:
            return np.broadcast_to(arr, (k.size,) + arr.shape)
        return arr[k]

    def _eval(self, k, x0, x1):
        x = np.concatenate([x0, x1], axis=1)
        H = self._pick(self.H, k, 2)
        g = self._pick(self.g, k, 1)
        c = np.broadcast_to(np.asarray(self.c, dtype=float), (k.size,)) if np.ndim(self.c) == 0 else np.asarray(self.c)[k]
        return 0.5 * np.einsum("mi,mij,mj->m", x, H, x) + np.einsum("mi,mi->m", g, x) + c

    def _derivatives(self, k, x0, x1):
        d = x0.shape[1]
        x = np.concatenate([x0, x1], axis=1)
        H = self._pick(self.H, k, 2)
        grad = np.einsum("mij,mj->mi", H, x) + self._pick(self.g, k, 1)
        return (
            grad[:, :d],
            grad[:, d:],
            H[:, :d, :d].copy(),
            H[:, :d, d:].copy(),
            H[:, d:, d:].copy(),
        )


def free_particle_model(h=1.0, M=None, dim=1, V=None) -> QuadraticModel:
    """``(x1 - x0)^T M (x1 - x0) / (2h) - h V.(x0, x1)`` with ``V`` linear."""
    M = np.eye(dim) if M is None else np.asarray(M, dtype=float)
    dim = M.shape[0]
    H = np.block([[M, -M], [-M, M]]) / h
    g = np.zeros(2 * dim) if V is None else -h * np.asarray(V, dtype=float)
    return QuadraticModel(1, dim, H, g)


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------


def make_linear_initial_guess(
    boundary: BoundaryData, N: int, gamma: int, dim: int, times=None
) -> Trajectory:
    """Affine interpolation between the boundary nodes.

    Position blocks are piecewise linear through the knots; derivative blocks
    are affine between the boundary derivative blocks.
    """
    if N < 2:
        raise InvalidArgument("N must be >= 2")
    boundary.validate(N, gamma, dim)
    s = np.arange(N + 1) / N
    nodes = boundary.left[None, :] + s[:, None] * (boundary.right - boundary.left)[None, :]
    if boundary.knots:
        idx = [0] + [k.index for k in boundary.knots] + [N]
        pts = [boundary.left[:dim]] + [k.position[:dim] for k in boundary.knots] + [boundary.right[:dim]]
        pts = np.array(pts)
        for j in range(dim):
            nodes[:, j] = np.interp(np.arange(N + 1), idx, pts[:, j])
    nodes = boundary.impose(nodes)
    if times is None:
        times = s
    return Trajectory(nodes, times, gamma, dim)


def del_residuals(model: DiscreteLagrangianModel, traj: Trajectory) -> np.ndarray:
    """DEL residual ``D2 L_{d,k-1}(q_{k-1}, q_k) + D1 L_{d,k}(q_k, q_{k+1})`` at every interior node.

    Row ``i`` of the result belongs to node ``k = i + 1``.
    """
    q = traj.nodes
    N = traj.N
    ks = np.arange(N)
    g1, g2, *_ = model.derivatives(ks, q[:-1], q[1:])
    return g2[:-1] + g1[1:]


def del_residual(model: DiscreteLagrangianModel, traj: Trajectory, k: int) -> np.ndarray:
    if not 1 <= k <= traj.N - 1:
        raise IndexError(f"interior node index {k} outside [1, {traj.N - 1}]")
    q = traj.nodes
    g2 = model.grad2(k - 1, q[k - 1], q[k])
    g1 = model.grad1(k, q[k], q[k + 1])
    return g2 + g1


def max_residual(model: DiscreteLagrangianModel, traj: Trajectory, mask=None) -> float:
    """Max-norm of the DEL residual over interior nodes.

    ``mask`` (the free-component mask of the boundary data) restricts the
    norm to components a sweep is allowed to move, as at interpolation knots.
    """
    r = del_residuals(model, traj)
    if mask is not None:
        r = np.where(mask[1:-1], r, 0.0)
    return float(np.max(np.abs(r))) if r.size else 0.0


def discrete_action(model: DiscreteLagrangianModel, traj: Trajectory) -> float:
    q = traj.nodes
    return float(np.sum(model.eval(np.arange(traj.N), q[:-1], q[1:])))
