"""Relaxation of a whole discrete trajectory toward a solution of the DEL equations.

Each sweep replaces every interior node by a function of the previous iterate
only, so the nodes can be processed in any order and in parallel.  With more
than one thread (``VARINT_THREADS``) the work is split into fixed-size chunks
of consecutive nodes.  Since no update reads a value written in the same
sweep, results are bit-identical for any number of threads.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np
from scipy.interpolate import CubicSpline

from .core import (
    BoundaryData,
    DivergedAtNode,
    InvalidArgument,
    InvalidMonitor,
    Knot,
    ModelError,
    RefinementKnotClash,
    SingularDiagonalBlock,
    SolverConfig,
    Trajectory,
    VarintError,
    make_linear_initial_guess,
)
from .diagnostics import check_theorem_conditions

CHUNK = 64
INNER_TOL = 1e-12


def thread_count() -> int:
    env = os.environ.get("VARINT_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError as exc:
            raise InvalidArgument(f"VARINT_THREADS={env!r} is not an integer") from exc
        if n < 1:
            raise InvalidArgument("VARINT_THREADS must be >= 1")
        return n
    return os.cpu_count() or 1


@dataclass
class SolveReport:
    final: Trajectory
    iterations: int
    residual_history: List[float]
    converged: bool
    diagnostics: list = field(default_factory=list)
    wall_time: float = 0.0
    boundary: Optional[BoundaryData] = None
    error: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "converged": self.converged,
            "final_residual": self.residual_history[-1] if self.residual_history else None,
            "residual_history": list(self.residual_history),
            "wall_time": self.wall_time,
            "N": self.final.N,
            "gamma": self.final.gamma,
            "dim": self.final.dim,
            "t_final": float(self.final.times[-1]),
            "diagnostics": [dict(d) for d in self.diagnostics],
            "error": self.error,
        }


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------


def _solve_blocks(D, r, nodes):
    """Batched ``D^{-1} r``; ``nodes`` labels each block for error reporting."""
    try:
        x = np.linalg.solve(D, r[..., None])[..., 0]
    except np.linalg.LinAlgError:
        for i in range(D.shape[0]):
            try:
                np.linalg.solve(D[i], r[i])
            except np.linalg.LinAlgError:
                raise SingularDiagonalBlock(int(nodes[i])) from None
        raise  # pragma: no cover
    bad = ~np.all(np.isfinite(x), axis=1)
    if np.any(bad):
        raise DivergedAtNode(int(nodes[np.argmax(bad)]))
    return x


def _project(D, r, free):
    """Restrict the local system to the free components of each node.

    Fixed components get an identity row and a zero right-hand side, so the
    correction leaves them untouched.
    """
    P = free.astype(float)
    D = D * P[:, :, None] * P[:, None, :]
    idx = np.arange(D.shape[1])
    D[:, idx, idx] += 1.0 - P
    return D, r * P


def _derivs(model, k, x0, x1):
    try:
        return model.derivatives(k, x0, x1)
    except (FloatingPointError, ZeroDivisionError) as exc:
        raise ModelError(str(exc)) from exc


def _newton_step(D, r, free, kk):
    D, r = _project(D, r, free)
    if not (np.all(np.isfinite(D)) and np.all(np.isfinite(r))):
        bad = ~(np.all(np.isfinite(r), axis=1) & np.all(np.isfinite(D), axis=(1, 2)))
        raise DivergedAtNode(int(kk[np.argmax(bad)]))
    return _solve_blocks(D, r, kk), r


def _chunk_update(model, q, free, lo, hi, iters, tol):
    """New values of interior nodes ``lo..hi-1`` from the old iterate ``q``.

    Also returns the max-norm of the (free part of the) DEL residual of the
    old iterate over these nodes.
    """
    if getattr(model, "compiled", False):
        x, res, status, node = model.chunk_update(q, free, lo, hi, iters, tol)
        if status == 1:
            raise SingularDiagonalBlock(int(node))
        if status == 2:
            raise DivergedAtNode(int(node))
        return x, res
    ks = np.arange(lo, hi)
    # first step: the intervals lo-1 .. hi-1 all touch the old iterate only
    g1, g2, A, _, B = _derivs(model, np.arange(lo - 1, hi), q[lo - 1 : hi], q[lo : hi + 1])
    dx, r = _newton_step(B[:-1] + A[1:], g2[:-1] + g1[1:], free[ks], ks)
    res0 = float(np.max(np.abs(r))) if r.size else 0.0
    x = q[ks] - dx
    if iters == 1:
        return x, res0
    left, right = q[ks - 1], q[ks + 1]
    active = np.any(free[ks], axis=1)
    for _ in range(iters - 1):
        sel = np.nonzero(active)[0]
        if sel.size == 0:
            break
        kk = ks[sel]
        _, g2, _, _, B = _derivs(model, kk - 1, left[sel], x[sel])
        g1, _, A, _, _ = _derivs(model, kk, x[sel], right[sel])
        r = (g2 + g1) * free[kk]
        done = np.max(np.abs(r), axis=1) < tol
        active[sel[done]] = False
        keep = ~done
        if not np.any(keep):
            break
        sel, kk = sel[keep], kk[keep]
        step, _ = _newton_step((B + A)[keep], r[keep], free[kk], kk)
        x[sel] -= step
    return x, res0


_POOLS = {}


def _pool(n):
    # one long-lived pool per thread count; a solve runs up to millions of sweeps
    pool = _POOLS.get(n)
    if pool is None:
        pool = _POOLS[n] = ThreadPoolExecutor(max_workers=n, thread_name_prefix="varint")
    return pool


def _sweep(model, traj, boundary, iters, tol, threads=None, order=None, with_residual=False):
    N = traj.N
    if N < 2:
        out = traj.copy()
        return (out, 0.0) if with_residual else out
    q = traj.nodes
    free = boundary.free_mask(N, traj.gamma, traj.dim) if boundary is not None else _default_mask(traj)
    n = thread_count() if threads is None else int(threads)
    # every node update reads the old iterate only, so the partition into
    # chunks (and their order) cannot change a single bit of the result
    size = CHUNK if n > 1 else N
    if order == "reverse":
        size = 1  # node by node, last node first
    chunks = [(lo, min(lo + size, N)) for lo in range(1, N, size)]
    if order == "reverse":
        chunks = chunks[::-1]
    new = q.copy()

    def work(c):
        lo, hi = c
        return (lo, hi) + _chunk_update(model, q, free, lo, hi, iters, tol)

    if n > 1 and len(chunks) > 1:
        results = list(_pool(n).map(work, chunks))
    else:
        results = [work(c) for c in chunks]
    res = 0.0
    for lo, hi, x, r in results:
        new[lo:hi] = x
        res = max(res, r)
    out = traj.with_nodes(new)
    return (out, res) if with_residual else out


def _default_mask(traj):
    m = np.ones(traj.nodes.shape, dtype=bool)
    m[0] = m[-1] = False
    return m


def jacobi_sweep(model, traj: Trajectory, boundary: Optional[BoundaryData] = None, inner_iters: int = 5,
                 threads=None, order=None) -> Trajectory:
    """One block Jacobi sweep.

    Every interior node solves its own DEL equation with the neighbours frozen
    at the previous iterate, by at most ``inner_iters`` Newton steps (stopping
    early once the local residual is below 1e-12).  Knot components given by
    ``boundary`` stay fixed and only the remaining components are solved for.
    """
    if inner_iters < 1:
        raise InvalidArgument("inner_iters must be >= 1")
    return _sweep(model, traj, boundary, inner_iters, INNER_TOL, threads, order)


def jacobi_newton_sweep(model, traj: Trajectory, boundary: Optional[BoundaryData] = None, substeps: int = 1,
                        threads=None, order=None) -> Trajectory:
    """One block Jacobi--Newton sweep: ``q_k <- q_k - D_k^{-1} r_k`` at every interior node."""
    if substeps < 1:
        raise InvalidArgument("substeps must be >= 1")
    return _sweep(model, traj, boundary, substeps, 0.0, threads, order)


def apply_damping(old: Trajectory, proposed: Trajectory, eps: float) -> Trajectory:
    """``q + (1 - eps) (q_bar - q)`` node by node."""
    if not 0 <= eps < 1:
        raise InvalidArgument("damping must satisfy 0 <= eps < 1")
    if eps == 0:
        return proposed
    return proposed.with_nodes(old.nodes + (1.0 - eps) * (proposed.nodes - old.nodes))


# ---------------------------------------------------------------------------
# grid operations
# ---------------------------------------------------------------------------


def refine(traj: Trajectory, new_N: int, boundary: Optional[BoundaryData] = None):
    """Resample ``traj`` on ``new_N`` intervals.

    Each derivative block and the times are interpolated by cubic splines in
    the normalised index ``k / N``.  Endpoints are copied bit-exactly; knots
    move to the nearest new index and keep their values.  Returns the new
    trajectory, and the remapped boundary data when ``boundary`` is given.
    """
    N = traj.N
    if new_N <= N:
        raise InvalidArgument("new_N must exceed the current N")
    s_old = np.arange(N + 1) / N
    s_new = np.arange(new_N + 1) / new_N
    nodes = CubicSpline(s_old, traj.nodes, axis=0)(s_new)
    times = CubicSpline(s_old, traj.times)(s_new)
    if np.any(np.diff(times) <= 0):
        times = np.interp(s_new, s_old, traj.times)
    nodes[0], nodes[-1] = traj.nodes[0], traj.nodes[-1]
    times[0], times[-1] = traj.times[0], traj.times[-1]
    new_boundary = None
    knots = boundary.knots if boundary is not None else []
    if boundary is not None:
        moved = []
        for knot in knots:
            idx = int(round(knot.index * new_N / N))
            if moved and idx <= moved[-1].index or not 0 < idx < new_N:
                raise RefinementKnotClash(f"knot at {knot.index} collides after refinement to N={new_N}")
            moved.append(Knot(idx, knot.position.copy(), knot.full))
            nodes[idx] = traj.nodes[knot.index]
        new_boundary = BoundaryData(boundary.left.copy(), boundary.right.copy(), moved)
        nodes = new_boundary.impose(nodes)
    out = Trajectory(nodes, times, traj.gamma, traj.dim)
    return (out, new_boundary) if boundary is not None else out


def sundman_rescale(traj: Trajectory, monitor: Callable, total_T: float) -> Trajectory:
    """Times with ``dt_k = c g_d(q_{k-1}, q_k)`` and ``c`` fixed by ``t_N = T``.

    ``monitor(x0, x1)`` is evaluated on all intervals at once and must return
    ``N`` positive values.
    """
    q = traj.nodes
    g = np.asarray(monitor(q[:-1], q[1:]), dtype=float).reshape(-1)
    if g.size != traj.N:
        raise InvalidArgument("monitor must return one value per interval")
    bad = ~(np.isfinite(g) & (g > 0))
    if np.any(bad):
        raise InvalidMonitor(int(np.argmax(bad)) + 1)
    t0 = float(traj.times[0])
    times = t0 + total_T * np.concatenate([[0.0], np.cumsum(g)]) / np.sum(g)
    times[-1] = t0 + total_T
    return traj.with_times(times)


def update_time_grid_zermelo(traj: Trajectory, F: Callable, h: Optional[float] = None, t0: float = 0.0):
    """``t_k = t_{k-1} + h F_{t_{k-1}}(q_{k-1}, (q_k - q_{k-1}) / h)``, evaluated sequentially.

    ``F(t, q, v)`` acts on a single point; ``h`` defaults to ``1 / N``.
    """
    N = traj.N
    h = 1.0 / N if h is None else float(h)
    q = traj.positions
    t = np.empty(N + 1)
    t[0] = t0
    for k in range(1, N + 1):
        f = float(F(t[k - 1], q[k - 1], (q[k] - q[k - 1]) / h))
        if not np.isfinite(f):
            raise ModelError(f"non-finite F on interval {k}")
        t[k] = t[k - 1] + h * f
    return t


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------


def solve(
    model_factory: Callable,
    boundary: BoundaryData,
    config: Optional[SolverConfig] = None,
    guess: Optional[Trajectory] = None,
    N: Optional[int] = None,
    gamma: int = 1,
    dim: Optional[int] = None,
    times=None,
    time_grid: Optional[Callable] = None,
    monitor: Optional[Callable] = None,
    total_T: Optional[float] = None,
    progress: Optional[Callable] = None,
    threads=None,
) -> SolveReport:
    """Iterate sweeps until the DEL residual drops below ``config.tol_residual``.

    ``model_factory(times)`` builds the discrete Lagrangian for a time grid
    and is called again whenever the grid changes (refinement, ``time_grid``
    updates, Sundman rescaling).  Without ``guess`` the start is the linear
    interpolation of the boundary data on ``N`` intervals.

    ``config.refinement`` lists ``(N_target, iterations)`` levels: after that
    many sweeps on the current grid, or as soon as its residual is below
    ``tol_residual``, the trajectory is interpolated onto ``N_target``
    intervals and the damping is raised to ``damping_post_refine`` for
    ``post_refine_iters`` sweeps (also after every ``time_grid`` update).

    ``time_grid(traj) -> times`` is a problem-specific recurrence applied
    every ``config.time_grid_update_period`` sweeps; ``monitor`` with
    ``total_T`` rescales the grid after every ``config.sundman_period``
    sweeps.  ``progress(iteration, residual)`` is called after each sweep.
    """
    config = config or SolverConfig()
    start = time.perf_counter()
    boundary = BoundaryData(boundary.left, boundary.right, list(boundary.knots))
    levels = list(config.refinement)
    if guess is None:
        if dim is None:
            raise InvalidArgument("dim is required without an initial guess")
        if N is None:
            raise InvalidArgument("give N or an initial guess")
        if times is not None and len(times) != N + 1:
            raise InvalidArgument("times do not match N")
        traj = make_linear_initial_guess(boundary, N, gamma, dim, times)
    else:
        traj = guess.copy()
        boundary.validate(traj.N, traj.gamma, traj.dim)
        traj = traj.with_nodes(boundary.impose(traj.nodes))
    # drop levels already at or below the starting resolution
    levels = [lv for lv in levels if lv[0] > traj.N]
    if total_T is None and monitor is not None:
        total_T = float(traj.times[-1] - traj.times[0])

    def rebuild(tr):
        if time_grid is not None:
            tr = tr.with_times(time_grid(tr))
        if monitor is not None:
            tr = sundman_rescale(tr, monitor, total_T)
        return tr

    traj = rebuild(traj)
    model = model_factory(traj.times)
    history: List[float] = []
    diagnostics: list = []
    hot = 0  # sweeps left at the post-refinement damping
    level_it = 0  # sweeps on the current grid
    since_grid = 0
    it = 0
    converged = False
    error = None

    def finish():
        return SolveReport(traj, it, history, converged, diagnostics,
                           time.perf_counter() - start, boundary, error)

    try:
        while True:
            # the sweep also evaluates the residual of the iterate it starts from
            if config.method == "jacobi":
                prop, res = _sweep(model, traj, boundary, config.inner_newton_iters, INNER_TOL,
                                   threads, with_residual=True)
            else:
                prop, res = _sweep(model, traj, boundary, config.newton_substeps, 0.0,
                                   threads, with_residual=True)
            if not np.isfinite(res):
                raise DivergedAtNode(-1)
            history.append(res)
            if progress is not None:
                progress(it, res)
            if levels and (res < config.tol_residual or level_it >= levels[0][1]):
                new_N = levels.pop(0)[0]
                traj, boundary = refine(traj, new_N, boundary)
                traj = rebuild(traj)
                model = model_factory(traj.times)
                hot = config.post_refine_iters
                level_it = 0
                continue
            if res < config.tol_residual:
                if time_grid is None or since_grid == 0:
                    converged = True
                    break
                # settle the time grid before declaring convergence
                traj = traj.with_times(time_grid(traj))
                model = model_factory(traj.times)
                since_grid = 0
                continue
            if it >= config.max_iters:
                break
            eps = config.damping_post_refine if hot > 0 else config.damping
            traj = apply_damping(traj, prop, eps)
            hot = max(hot - 1, 0)
            it += 1
            level_it += 1
            since_grid += 1
            regrid = False
            if time_grid is not None and since_grid >= config.time_grid_update_period:
                traj = traj.with_times(time_grid(traj))
                since_grid = 0
                regrid = True
                hot = config.post_refine_iters
            if monitor is not None and it % config.sundman_period == 0:
                traj = sundman_rescale(traj, monitor, total_T)
                regrid = True
            if regrid:
                model = model_factory(traj.times)
            if config.diagnostics_every and it % config.diagnostics_every == 0:
                rep = check_theorem_conditions(model, traj)
                diagnostics.append(dict(rep.to_dict(), iteration=it))
    except VarintError as exc:
        error = f"{type(exc).__name__}: {exc}"
    return finish()


def solve_with_knots(model_factory, boundary: BoundaryData, config=None, **kwargs) -> SolveReport:
    """:func:`solve` for boundary data with interpolation knots.

    Knot nodes keep their position block; only the remaining blocks are
    relaxed, by the projected local equation.
    """
    if not boundary.knots:
        raise InvalidArgument("boundary data has no knots")
    return solve(model_factory, boundary, config, **kwargs)
