"""Continuous Lagrangians and the quadrature rules that turn them into discrete ones.

Every scheme here evaluates ``L`` at a few stages whose jets are *linear*
functions of the two end nodes, so derivatives of ``L_d`` follow from those
of ``L`` by the chain rule through constant stage matrices.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
import sympy
from scipy.integrate import solve_ivp

from . import kernels
from .core import DiscreteLagrangianModel, InvalidArgument, OracleError

SQRT3 = np.sqrt(3.0)


# ---------------------------------------------------------------------------
# continuous Lagrangians
# ---------------------------------------------------------------------------


class ContinuousLagrangian:
    """``L(t, z)`` with ``z = (q, q', ..., q^(gamma))`` a flat vector of length ``(gamma+1) n``.

    Methods are batched: ``t`` has shape ``(m,)`` and ``z`` shape ``(m, (gamma+1) n)``.
    Subclasses override :meth:`eval` and, when they can, :meth:`grad` and
    :meth:`hess` (setting ``derivatives_analytic``).  ``el_rhs(t, y)``, the
    Euler-Lagrange equations as a first-order system in
    ``y = (q, ..., q^(2 gamma - 1))``, is optional and only used by
    :func:`estimate_order`.
    """

    derivatives_analytic = False
    el_rhs: Optional[Callable] = None

    def __init__(self, gamma: int, dim: int):
        self.gamma = gamma
        self.dim = dim

    @property
    def width(self):
        return (self.gamma + 1) * self.dim

    def eval(self, t, z):
        raise NotImplementedError

    def grad(self, t, z):
        z = np.atleast_2d(z)
        step = 1e-6 * (1 + np.max(np.abs(z), axis=1))
        out = np.empty_like(z)
        for i in range(z.shape[1]):
            e = np.zeros_like(z)
            e[:, i] = step
            out[:, i] = (self.eval(t, z + e) - self.eval(t, z - e)) / (2 * step)
        return out

    def hess(self, t, z):
        z = np.atleast_2d(z)
        step = 1e-4 * (1 + np.max(np.abs(z), axis=1))
        w = z.shape[1]
        out = np.empty((z.shape[0], w, w))
        for i in range(w):
            e = np.zeros_like(z)
            e[:, i] = step
            out[:, :, i] = (self.grad(t, z + e) - self.grad(t, z - e)) / (2 * step[:, None])
        return 0.5 * (out + np.swapaxes(out, 1, 2))

    def velocity_hessian(self, t, z):
        """Hessian of ``L`` in the highest derivative block (``W`` in the text)."""
        n, g = self.dim, self.gamma
        H = self.hess(t, z)
        return H[..., g * n :, g * n :]


class CallableLagrangian(ContinuousLagrangian):
    """Continuous Lagrangian from batched callables."""

    def __init__(self, gamma, dim, eval, grad=None, hess=None, el_rhs=None):
        super().__init__(gamma, dim)
        self._eval = eval
        self._grad = grad
        self._hess = hess
        self.el_rhs = el_rhs
        self.derivatives_analytic = grad is not None and hess is not None

    def eval(self, t, z):
        return np.broadcast_to(self._eval(t, np.atleast_2d(z)), (np.atleast_2d(z).shape[0],))

    def grad(self, t, z):
        if self._grad is None:
            return super().grad(t, z)
        return self._grad(t, np.atleast_2d(z))

    def hess(self, t, z):
        if self._hess is None:
            return super().hess(t, z)
        return self._hess(t, np.atleast_2d(z))


def _lambdify_array(args, exprs, shape):
    flat = list(exprs)
    f = sympy.lambdify(args, flat, modules="numpy", cse=True)

    def call(t, z):
        m = z.shape[0]
        vals = f(t, *z.T)
        out = np.empty((m, len(flat)))
        for i, v in enumerate(vals):
            out[:, i] = v
        return out.reshape((m,) + shape)

    return call


class SymbolicLagrangian(ContinuousLagrangian):
    """Lagrangian given as a sympy expression; exact derivatives are generated on first use.

    ``variables`` lists the ``(gamma+1) n`` jet symbols in block order.
    """

    derivatives_analytic = True

    def __init__(self, gamma, dim, expr, t, variables, el_rhs=None):
        super().__init__(gamma, dim)
        variables = list(variables)
        if len(variables) != (gamma + 1) * dim:
            raise InvalidArgument("wrong number of jet variables")
        self.expr = expr
        self.t = t
        self.variables = variables
        self.el_rhs = el_rhs
        self._derivs = None
        self._funcs = None

    def derivative_exprs(self):
        """``(grad, upper)``: gradient and the row-major upper triangle of the Hessian."""
        if self._derivs is None:
            v = self.variables
            grad = [sympy.diff(self.expr, x) for x in v]
            upper = [sympy.diff(grad[i], v[j]) for i in range(len(v)) for j in range(i, len(v))]
            self._derivs = (grad, upper)
        return self._derivs

    def _lambdified(self):
        if self._funcs is None:
            grad, upper = self.derivative_exprs()
            w = len(self.variables)
            full = [None] * (w * w)
            n = 0
            for i in range(w):
                for j in range(i, w):
                    full[i * w + j] = full[j * w + i] = upper[n]
                    n += 1
            args = [self.t] + self.variables
            self._funcs = (
                _lambdify_array(args, [self.expr], ()),
                _lambdify_array(args, grad, (w,)),
                _lambdify_array(args, full, (w, w)),
            )
        return self._funcs

    def _prep(self, t, z):
        z = np.atleast_2d(np.asarray(z, dtype=float))
        t = np.broadcast_to(np.asarray(t, dtype=float), (z.shape[0],))
        return t, z

    def eval(self, t, z):
        return self._lambdified()[0](*self._prep(t, z))

    def grad(self, t, z):
        return self._lambdified()[1](*self._prep(t, z))

    def hess(self, t, z):
        return self._lambdified()[2](*self._prep(t, z))


def jet_symbols(gamma, dim, names=None):
    """Sympy symbols ``(t, [q_0.., dq_0.., ...])`` in block order."""
    t = sympy.Symbol("t", real=True)
    names = names or [f"x{i}" for i in range(dim)]
    syms = []
    for a in range(gamma + 1):
        syms += [sympy.Symbol("d" * a + nm, real=True) for nm in names]
    return t, syms


# ---------------------------------------------------------------------------
# quadrature models
# ---------------------------------------------------------------------------


@dataclass
class StageRule:
    """Stages of a quadrature rule on one interval.

    ``coefficients(h)`` returns an array ``(s, gamma+1, 2 gamma)`` of the
    scalar stage maps (jet degree x end-node block), ``nodes`` the stage
    abscissae in ``[0, 1]`` and ``weights`` the weights (multiplied by ``h``).
    """

    name: str
    gamma: int
    coefficients: Callable
    nodes: np.ndarray
    weights: np.ndarray


class QuadratureModel(DiscreteLagrangianModel):
    """``L_{d,k}(x0, x1) = h_k sum_s w_s L(t_k + c_s (t_{k+1} - t_k), S_s(h_k) (x0, x1))``.

    ``times`` is the time grid the stages are sampled on; ``steps`` (default
    ``diff(times)``) is the step used inside the stage maps.  The two differ
    when the curve parameter is not physical time, as in minimum-time
    navigation.
    """

    def __init__(self, L: ContinuousLagrangian, rule: StageRule, times, steps=None, compiled=None):
        if L.gamma != rule.gamma:
            raise InvalidArgument(f"rule {rule.name} needs gamma={rule.gamma}, got {L.gamma}")
        super().__init__(L.gamma, L.dim)
        self.L = L
        self.rule = rule
        self.times = np.asarray(times, dtype=float)
        steps = np.diff(self.times) if steps is None else steps
        self.steps = np.broadcast_to(np.asarray(steps, dtype=float), (self.times.size - 1,)).copy()
        if np.any(self.steps <= 0):
            raise InvalidArgument("steps must be positive")
        self.derivatives_analytic = L.derivatives_analytic
        eye = np.eye(L.dim)
        # stage matrices per interval: (N, s, (gamma+1) n, 2 gamma n)
        coeff = rule.coefficients(self.steps)
        self._S = np.einsum("ksab,ij->ksaibj", coeff, eye).reshape(
            coeff.shape[0], coeff.shape[1], (L.gamma + 1) * L.dim, 2 * L.gamma * L.dim
        )
        dt = np.diff(self.times)
        self._tstage = self.times[:-1, None] + rule.nodes[None, :] * dt[:, None]
        self._w = rule.weights[None, :] * self.steps[:, None]
        if compiled is None:
            compiled = isinstance(L, SymbolicLagrangian) and kernels.available()
        self.compiled = bool(compiled)
        self._kern = None

    @property
    def kern(self):
        if self._kern is None:
            self._kern = kernels.kernels_for(self.L)
            self._S = np.ascontiguousarray(self._S)
            self._tstage = np.ascontiguousarray(self._tstage)
            self._w = np.ascontiguousarray(self._w)
        return self._kern

    def _batch(self, k, x0, x1):
        return self.kern["batch"](
            self._S, self._w, self._tstage, np.ascontiguousarray(k, dtype=np.int64),
            np.ascontiguousarray(x0, dtype=float), np.ascontiguousarray(x1, dtype=float),
        )

    def chunk_update(self, q, free, lo, hi, iters, tol):
        """Compiled relaxation of nodes ``lo..hi-1``: ``(new nodes, residual, status, node)``."""
        out = np.empty((hi - lo, q.shape[1]))
        res, status, node = self.kern["chunk"](
            self._S, self._w, self._tstage, np.ascontiguousarray(q), np.ascontiguousarray(free),
            lo, hi, iters, tol, out,
        )
        return out, res, status, node

    def stage_jets(self, k, x0, x1):
        x = np.concatenate([x0, x1], axis=1)
        return (self._S[k] @ x[:, None, :, None])[..., 0]

    def _eval(self, k, x0, x1):
        if self.compiled:
            return self._batch(k, x0, x1)[0]
        z = self.stage_jets(k, x0, x1)
        m, s, w = z.shape
        vals = self.L.eval(self._tstage[k].reshape(-1), z.reshape(m * s, w)).reshape(m, s)
        return np.sum(self._w[k] * vals, axis=1)

    def _derivatives(self, k, x0, x1):
        if self.compiled:
            return self._batch(k, x0, x1)[1:]
        S = self._S[k]
        z = (S @ np.concatenate([x0, x1], axis=1)[:, None, :, None])[..., 0]
        m, s, w = z.shape
        t = self._tstage[k].reshape(-1)
        zz = z.reshape(m * s, w)
        g = self.L.grad(t, zz).reshape(m, s, w)
        H = self.L.hess(t, zz).reshape(m, s, w, w)
        wk = self._w[k][:, :, None]
        St = np.swapaxes(S, -1, -2)
        grad = np.sum(wk * (St @ g[..., None])[..., 0], axis=1)
        hess = np.sum(wk[..., None] * (St @ (H @ S)), axis=1)
        hess = 0.5 * (hess + np.swapaxes(hess, 1, 2))
        d = x0.shape[1]
        return grad[:, :d], grad[:, d:], hess[:, :d, :d], hess[:, :d, d:], hess[:, d:, d:]


def _trap1_coeff(h):
    h = np.asarray(h, dtype=float)
    c = np.zeros(h.shape + (2, 2, 2))
    c[..., 0, 0, 0] = 1.0
    c[..., 1, 0, 1] = 1.0
    for s in range(2):
        c[..., s, 1, 0] = -1.0 / h
        c[..., s, 1, 1] = 1.0 / h
    return c


TRAPEZOIDAL_1 = StageRule("trapezoidal", 1, _trap1_coeff, np.array([0.0, 1.0]), np.array([0.5, 0.5]))


def alpha_trapezoidal_rule(alpha: float) -> StageRule:
    if alpha == 0:
        raise InvalidArgument("alpha must be nonzero for a regular discrete Lagrangian")
    a3 = 3.0 * alpha

    def coeff(h):
        h = np.asarray(h, dtype=float)
        c = np.zeros(h.shape + (2, 3, 4))
        # blocks: q0, v0, q1, v1
        c[..., 0, 0, 0] = 1.0
        c[..., 0, 1, 1] = 1.0
        c[..., 0, 2, :] = np.stack(
            [-2 * a3 / h**2, -(1 + a3) / h, 2 * a3 / h**2, (1 - a3) / h], axis=-1
        )
        c[..., 1, 0, 2] = 1.0
        c[..., 1, 1, 3] = 1.0
        c[..., 1, 2, :] = np.stack(
            [2 * a3 / h**2, -(1 - a3) / h, -2 * a3 / h**2, (1 + a3) / h], axis=-1
        )
        return c

    return StageRule(f"alpha_trapezoidal({alpha})", 2, coeff, np.array([0.0, 1.0]), np.array([0.5, 0.5]))


def _lobatto2_coeff(h):
    h = np.asarray(h, dtype=float)
    c = np.zeros(h.shape + (2, 3, 4))
    c[..., 0, 0, 0] = 1.0
    c[..., 0, 1, 1] = 1.0
    # (2/h^2)(3(q1 - q0) - h(v1 + 2 v0))
    c[..., 0, 2, :] = np.stack([-6 / h**2, -4 / h, 6 / h**2, -2 / h], axis=-1)
    c[..., 1, 0, 2] = 1.0
    c[..., 1, 1, 3] = 1.0
    # -(2/h^2)(3(q1 - q0) - h(2 v1 + v0))
    c[..., 1, 2, :] = np.stack([6 / h**2, 2 / h, -6 / h**2, 4 / h], axis=-1)
    return c


LOBATTO_2 = StageRule("lobatto2", 2, _lobatto2_coeff, np.array([0.0, 1.0]), np.array([0.5, 0.5]))


def gauss2_rule(alpha_gauss: float = SQRT3) -> StageRule:
    r = SQRT3 / 6

    def coeff(h):
        h = np.asarray(h, dtype=float)
        one = np.ones_like(h)
        c = np.zeros(h.shape + (2, 3, 4))
        # stage 1
        c[..., 0, 0, :] = np.stack([(0.5 + r) * one, h / 12, (0.5 - r) * one, -h / 12], axis=-1)
        c[..., 0, 1, :] = np.stack([-1 / h, r * one, 1 / h, -r * one], axis=-1)
        c[..., 0, 2, :] = np.stack(
            [-2 * alpha_gauss / h**2, -(1 + SQRT3) / h, 2 * alpha_gauss / h**2, (1 - SQRT3) / h], axis=-1
        )
        # stage 2
        c[..., 1, 0, :] = np.stack([(0.5 - r) * one, h / 12, (0.5 + r) * one, -h / 12], axis=-1)
        c[..., 1, 1, :] = np.stack([-1 / h, -r * one, 1 / h, r * one], axis=-1)
        c[..., 1, 2, :] = np.stack(
            [2 * alpha_gauss / h**2, -(1 - SQRT3) / h, -2 * alpha_gauss / h**2, (1 + SQRT3) / h], axis=-1
        )
        return c

    return StageRule("gauss2", 2, coeff, np.array([0.5 - r, 0.5 + r]), np.array([0.5, 0.5]))


def _grid(times=None, h=None, N=None):
    if times is None:
        if h is None:
            raise InvalidArgument("give a time grid or a step")
        times = h * np.arange((N or 1) + 1)
    return np.asarray(times, dtype=float)


def trapezoidal_first_order(L, h=None, times=None, N=None, steps=None, compiled=None) -> QuadratureModel:
    """``(h/2) [L(t_k, q0, (q1-q0)/h) + L(t_{k+1}, q1, (q1-q0)/h)]``."""
    if h is not None and h <= 0:
        raise InvalidArgument("h must be positive")
    return QuadratureModel(L, TRAPEZOIDAL_1, _grid(times, h, N), steps, compiled)


def alpha_trapezoidal_second_order(L, h=None, alpha=1.0, times=None, N=None, steps=None, compiled=None) -> QuadratureModel:
    if h is not None and h <= 0:
        raise InvalidArgument("h must be positive")
    return QuadratureModel(L, alpha_trapezoidal_rule(alpha), _grid(times, h, N), steps, compiled)


def lobatto2_second_order(L, h=None, times=None, N=None, steps=None, compiled=None) -> QuadratureModel:
    if h is not None and h <= 0:
        raise InvalidArgument("h must be positive")
    return QuadratureModel(L, LOBATTO_2, _grid(times, h, N), steps, compiled)


def gauss2_second_order(L, h=None, alpha_gauss=SQRT3, times=None, N=None, steps=None, compiled=None) -> QuadratureModel:
    if h is not None and h <= 0:
        raise InvalidArgument("h must be positive")
    return QuadratureModel(L, gauss2_rule(alpha_gauss), _grid(times, h, N), steps, compiled)


SCHEMES = {
    "trapezoidal": trapezoidal_first_order,
    "alpha_trapezoidal": alpha_trapezoidal_second_order,
    "lobatto2": lobatto2_second_order,
    "gauss2": gauss2_second_order,
}


# ---------------------------------------------------------------------------
# empirical order
# ---------------------------------------------------------------------------


@dataclass
class OrderEstimate:
    steps: np.ndarray
    errors: np.ndarray
    slope: float
    order: float
    at_floor: bool


_GL_X, _GL_W = np.polynomial.legendre.leggauss(10)


def exact_discrete_lagrangian(L: ContinuousLagrangian, y0, h: float, t0: float = 0.0):
    """Action of ``L`` over ``[t0, t0 + h]`` along the Euler-Lagrange solution from ``y0``.

    Returns ``(L_d^e, x0, x1)`` where ``x0``, ``x1`` are the ``(gamma-1)``-jets
    at the ends.
    """
    if L.el_rhs is None:
        raise OracleError("the Lagrangian provides no Euler-Lagrange right-hand side")
    g, n = L.gamma, L.dim
    y0 = np.asarray(y0, dtype=float)
    sol = solve_ivp(
        L.el_rhs, (t0, t0 + h), y0, method="DOP853", rtol=1e-13, atol=1e-15,
        dense_output=True, max_step=h / 8,
    )
    if not sol.success:
        raise OracleError(f"reference integration failed: {sol.message}")
    edges = np.linspace(t0, t0 + h, 9)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        ts = 0.5 * (b - a) * _GL_X + 0.5 * (a + b)
        ys = sol.sol(ts).T  # (10, 2 g n)
        jet = ys[:, : (g + 1) * n]
        total += 0.5 * (b - a) * float(np.dot(_GL_W, L.eval(ts, jet)))
    y1 = sol.sol(t0 + h)
    return total, y0[: g * n].copy(), y1[: g * n].copy()


def estimate_order(scheme: Callable, L: ContinuousLagrangian, probes: Sequence, h0: float, levels: int = 4) -> OrderEstimate:
    """Slope of ``max |L_d - L_d^e|`` against ``h`` on log-log axes, over ``h0, h0/2, ...``.

    ``scheme(L, h)`` builds the discrete model for step ``h``; ``probes`` are
    initial values ``(q, ..., q^(2 gamma - 1))`` of Euler-Lagrange solutions.
    The reported order is ``slope - 1``.
    """
    hs = h0 / 2.0 ** np.arange(levels)
    errs = []
    scale = 0.0
    for h in hs:
        model = scheme(L, h)
        worst = 0.0
        for y0 in probes:
            exact, x0, x1 = exact_discrete_lagrangian(L, y0, h)
            approx = model.eval(0, x0, x1)
            worst = max(worst, abs(approx - exact))
            scale = max(scale, abs(exact))
        errs.append(worst)
    errs = np.array(errs)
    floor = 1e-13 * max(scale, 1e-300)
    if np.all(errs <= floor):
        return OrderEstimate(hs, errs, np.inf, np.inf, True)
    slope = float(np.polyfit(np.log(hs), np.log(np.maximum(errs, floor)), 1)[0])
    return OrderEstimate(hs, errs, slope, slope - 1.0, False)
