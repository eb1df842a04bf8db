"""Navigation and astrodynamics examples, ready to hand to the solver.

Every problem is a :class:`ProblemSpec`: a continuous Lagrangian built from
sympy expressions (so its derivatives are exact), a discretization scheme,
boundary data and solver defaults.  ``PROBLEMS`` maps string ids to the
builders for the command line.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import sympy

from .core import (
    BoundaryData,
    DriftTooStrong,
    InvalidArgument,
    Knot,
    QuadraticModel,
    SingularPotential,
    SolverConfig,
    Trajectory,
    free_particle_model,
)
from .discretization import SCHEMES, ContinuousLagrangian, SymbolicLagrangian, jet_symbols
from .solver import solve, update_time_grid_zermelo

T_SYM, X_SYM, Y_SYM = sympy.symbols("t x y", real=True)


# ---------------------------------------------------------------------------
# wind fields and the Randers metric
# ---------------------------------------------------------------------------


class WindField:
    """Planar drift ``W(t, x, y)`` given by two sympy expressions in ``t, x, y``."""

    def __init__(self, W1, W2, name=""):
        self.exprs = (sympy.sympify(W1), sympy.sympify(W2))
        self.name = name
        self.time_dependent = any(T_SYM in e.free_symbols for e in self.exprs)
        args = (T_SYM, X_SYM, Y_SYM)
        jac = [[sympy.diff(e, v) for v in (X_SYM, Y_SYM)] for e in self.exprs]
        self._w = sympy.lambdify(args, list(self.exprs), "numpy")
        self._j = sympy.lambdify(args, jac, "numpy")

    def eval(self, t, x, y):
        """``W`` with a trailing axis of length 2."""
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        t = np.broadcast_to(np.asarray(t, float), x.shape)
        w1, w2 = self._w(t, x, y)
        return np.stack(np.broadcast_arrays(w1, w2), axis=-1).astype(float)

    def jacobian(self, t, x, y):
        """``D_j W_i`` with trailing axes ``(2, 2)``."""
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        t = np.broadcast_to(np.asarray(t, float), x.shape)
        rows = self._j(t, x, y)
        return np.stack(
            [np.stack(np.broadcast_arrays(*row), axis=-1) for row in rows], axis=-2
        ).astype(float)

    def max_speed(self, xlim, ylim, n=400, t=0.0):
        xs, ys = np.meshgrid(np.linspace(*xlim, n), np.linspace(*ylim, n))
        return float(np.max(np.linalg.norm(self.eval(t, xs, ys), axis=-1)))


def vortex(a, b, x=X_SYM, y=Y_SYM):
    """``R_{a,b}``: a vortex centred at ``(a, b)`` that fades with distance."""
    den = 3 * ((x - a) ** 2 + (y - b) ** 2) + 1
    return (-(y - b) / den, (x - a) / den)


def zermelo_static_wind(scale=1.7) -> WindField:
    terms = [(-1, 2, 2), (-1, 4, 4), (-1, 2, 5), (1, 5, 1)]
    W1 = sum(s * vortex(a, b)[0] for s, a, b in terms)
    W2 = sum(s * vortex(a, b)[1] for s, a, b in terms)
    return WindField(scale * W1, scale * W2, "four vortices")


def zermelo_time_varying_wind(amplitude=0.8) -> WindField:
    s = amplitude * sympy.sin(2 * X_SYM + Y_SYM)
    return WindField(s * sympy.cos(T_SYM / 2), s * sympy.sin(T_SYM / 2), "rotating shear")


def fuel_wind() -> WindField:
    return WindField(
        sympy.cos(2 * X_SYM - Y_SYM - 6),
        sympy.Rational(2, 3) * sympy.sin(Y_SYM) + X_SYM - 3,
        "fuel",
    )


def _randers_parts(W, v, g):
    Wv = W @ g @ v
    alpha = 1.0 - W @ g @ W
    a = (v @ g @ v) / alpha + Wv**2 / alpha**2
    return a, -Wv / alpha, alpha


def randers_F(W: WindField, t, q, v, g=None) -> float:
    """Minimum-time metric ``sqrt(a(v, v)) + <b, v>`` for drift ``W`` over metric ``g``."""
    g = np.eye(2) if g is None else np.asarray(g, float)
    q = np.asarray(q, float)
    v = np.asarray(v, float)
    w = W.eval(t, q[0], q[1])
    if w @ g @ w >= 1.0:
        raise DriftTooStrong(f"|W| >= 1 at {q.tolist()}")
    a, bv, _ = _randers_parts(w, v, g)
    return float(np.sqrt(max(a, 0.0)) + bv)


def randers_F2(W: WindField, t, q, v, g=None) -> float:
    if not np.any(np.asarray(v, float)):
        return 0.0
    return randers_F(W, t, q, v, g) ** 2


def randers_F2_expr(W: WindField, xs, vs):
    """Symbolic ``F^2`` (Euclidean base metric) with ``x, y`` replaced by ``xs``."""
    W1, W2 = (e.subs({X_SYM: xs[0], Y_SYM: xs[1]}, simultaneous=True) for e in W.exprs)
    Wv = W1 * vs[0] + W2 * vs[1]
    alpha = 1 - W1**2 - W2**2
    F = sympy.sqrt((vs[0] ** 2 + vs[1] ** 2) / alpha + Wv**2 / alpha**2) - Wv / alpha
    return F**2


def travel_time(traj: Trajectory, F: Callable, h: Optional[float] = None) -> float:
    """``sum_k h F_{t_{k-1}}(q_{k-1}, (q_k - q_{k-1}) / h)`` with ``h = 1/N`` by default."""
    N = traj.N
    h = 1.0 / N if h is None else float(h)
    q = traj.positions
    return float(sum(h * F(traj.times[k - 1], q[k - 1], (q[k] - q[k - 1]) / h) for k in range(1, N + 1)))


# ---------------------------------------------------------------------------
# problem container
# ---------------------------------------------------------------------------


@dataclass
class ProblemSpec:
    """A ready-to-solve boundary-value problem.

    ``parameter_step`` marks curve-parameter problems (minimum time), whose
    discrete Lagrangian uses the fixed step ``1/N`` even when the grid it is
    sampled on is physical time.
    """

    id: str
    lagrangian: ContinuousLagrangian
    gamma: int
    dim: int
    boundary: BoundaryData
    N: int
    T: float = 1.0
    scheme: str = "trapezoidal"
    scheme_params: dict = field(default_factory=dict)
    config: SolverConfig = field(default_factory=SolverConfig)
    parameter_step: bool = False
    time_grid: Optional[Callable] = None
    monitor: Optional[Callable] = None
    guess: Optional[Callable] = None
    F: Optional[Callable] = None
    wind: Optional[WindField] = None
    params: dict = field(default_factory=dict)
    model: Optional[Callable] = None  # direct model factory for purely discrete problems
    start_N: Optional[int] = None  # first grid when the config has a refinement schedule
    waypoints: list = field(default_factory=list)  # bends of the polyline initial guess

    def model_factory(self) -> Callable:
        if self.model is not None:
            return self.model
        build = SCHEMES[self.scheme]
        L, extra, fixed = self.lagrangian, dict(self.scheme_params), self.parameter_step

        def factory(times):
            steps = 1.0 / (len(times) - 1) if fixed else None
            return build(L, times=times, steps=steps, **extra)

        return factory

    def default_times(self, N: int) -> np.ndarray:
        return self.T * np.arange(N + 1) / N

    def initial_guess(self, N: Optional[int] = None) -> Trajectory:
        N = self.N if N is None else N
        if self.guess is not None:
            return self.guess(N)
        boundary = self.boundary
        if boundary.knots and N != self.N:
            boundary = scale_knots(boundary, self.N, N)
        return polyline_guess(boundary, self.waypoints, N, self.gamma, self.dim, self.default_times(N))

    def solve(self, config: Optional[SolverConfig] = None, guess: Optional[Trajectory] = None,
              progress=None, threads=None):
        """Solve from ``guess`` or the default guess.

        With a refinement schedule in ``config`` the default guess lives on
        ``start_N`` intervals and the schedule should end at ``N``.
        """
        config = config or self.config
        if guess is None:
            n0 = self.start_N if (config.refinement and self.start_N) else self.N
            guess = self.initial_guess(n0)
        boundary = self.boundary
        if boundary.knots and guess.N != self.N:
            boundary = scale_knots(boundary, self.N, guess.N)
        return solve(
            self.model_factory(), boundary, config, guess=guess,
            time_grid=self.time_grid, monitor=self.monitor,
            total_T=self.T if self.monitor is not None else None,
            progress=progress, threads=threads,
        )


def scale_knots(boundary: BoundaryData, N: int, new_N: int) -> BoundaryData:
    knots = []
    for k in boundary.knots:
        idx = k.index * new_N / N
        if idx != int(idx):
            raise InvalidArgument(f"knot index {k.index} does not map onto a grid of {new_N} intervals")
        knots.append(Knot(int(idx), k.position.copy(), k.full))
    return BoundaryData(boundary.left.copy(), boundary.right.copy(), knots)


def polyline_guess(boundary: BoundaryData, waypoints, N, gamma, dim, times) -> Trajectory:
    """Nodes equally spaced by arc length along the polyline through the waypoints.

    Knots are honoured: each segment between fixed positions is filled
    separately.  Higher derivative blocks are finite differences of the
    positions in ``times`` (the boundary values are kept at the ends).
    """
    times = np.asarray(times, float)
    anchors = [(0, boundary.left[:dim])] + [(k.index, k.position[:dim]) for k in boundary.knots] + [
        (N, boundary.right[:dim])
    ]
    pts = [np.asarray(p, float) for p in waypoints]
    pos = np.empty((N + 1, dim))
    for (i0, p0), (i1, p1) in zip(anchors[:-1], anchors[1:]):
        # waypoints apply only when there are no knots
        chain = np.array([p0] + (pts if len(anchors) == 2 else []) + [p1])
        seg = np.linalg.norm(np.diff(chain, axis=0), axis=1)
        s = np.concatenate([[0.0], np.cumsum(seg)])
        target = np.linspace(0.0, s[-1], i1 - i0 + 1)
        for j in range(dim):
            pos[i0 : i1 + 1, j] = np.interp(target, s, chain[:, j])
    nodes = np.zeros((N + 1, gamma * dim))
    nodes[:, :dim] = pos
    if gamma >= 2:
        nodes[:, dim : 2 * dim] = np.gradient(pos, times, axis=0)
    nodes = boundary.impose(nodes)
    return Trajectory(nodes, times, gamma, dim)


# ---------------------------------------------------------------------------
# catalog
# ---------------------------------------------------------------------------


def _zermelo_lagrangian(W: WindField):
    t, (x, y, dx, dy) = jet_symbols(1, 2, ["x", "y"])
    expr = randers_F2_expr(W, (x, y), (dx, dy)).subs(T_SYM, t)
    return SymbolicLagrangian(1, 2, expr, t, [x, y, dx, dy])


def zermelo_static_problem(N=80, start=(0.0, 0.0), end=(6.0, 2.0), scale=1.7, waypoints=(),
                           config=None) -> ProblemSpec:
    """Minimum-time navigation through four vortices, ``F^2`` with the trapezoidal rule.

    The curve parameter runs over ``[0, 1]``; travel time is
    :func:`travel_time` of the solution.  ``waypoints`` bend the initial
    polyline, which selects between local solutions.
    """
    W = zermelo_static_wind(scale)
    boundary = BoundaryData(start, end)
    # undamped sweeps overshoot into long looping solutions; half damping is stable
    cfg = config or SolverConfig(method="jacobi_newton", tol_residual=1e-8, max_iters=200_000, damping=0.5)
    return ProblemSpec(
        "zermelo_static", _zermelo_lagrangian(W), 1, 2, boundary, N, T=1.0, scheme="trapezoidal",
        config=cfg, wind=W, F=lambda t, q, v: randers_F(W, t, q, v),
        params={"scale": scale}, waypoints=[list(map(float, p)) for p in waypoints],
    )


def zermelo_time_varying_problem(N=50, start=(1.0, 6.0), end=(6.0, 2.0), amplitude=0.8, waypoints=(),
                                 config=None) -> ProblemSpec:
    """Minimum time in a rotating wind; the physical time grid follows the sequential recurrence."""
    W = zermelo_time_varying_wind(amplitude)
    boundary = BoundaryData(start, end)
    F = lambda t, q, v: randers_F(W, t, q, v)  # noqa: E731
    cfg = config or SolverConfig(method="jacobi_newton", tol_residual=1e-8, max_iters=200_000,
                                 time_grid_update_period=100)
    return ProblemSpec(
        "zermelo_time_varying", _zermelo_lagrangian(W), 1, 2, boundary, N, T=1.0, scheme="trapezoidal",
        config=cfg, parameter_step=True, wind=W, F=F,
        time_grid=lambda traj: update_time_grid_zermelo(traj, F),
        params={"amplitude": amplitude}, waypoints=[list(map(float, p)) for p in waypoints],
    )


def fuel_lagrangian(W: Optional[WindField] = None):
    W = W or fuel_wind()
    t, (x, y, dx, dy) = jet_symbols(1, 2, ["x", "y"])
    W1, W2 = (e.subs({X_SYM: x, Y_SYM: y, T_SYM: t}, simultaneous=True) for e in W.exprs)
    expr = sympy.Rational(1, 2) * ((dx - W1) ** 2 + (dy - W2) ** 2)
    return SymbolicLagrangian(1, 2, expr, t, [x, y, dx, dy])


def fuel_problem(N=200, T=30.0, start=(0.0, 0.0), end=(6.0, 5.0), config=None) -> ProblemSpec:
    """Least control effort ``1/2 |u|^2`` with ``q' = u + W(q)`` over a fixed duration."""
    W = fuel_wind()
    # the slowest mode contracts like 1 - O(h^2): coarse grids first, as long as
    # the coarsest step stays small enough for the sweeps to converge (h <= 0.6)
    levels = [(N // 2, 20_000), (N, 20_000)] if N >= 8 and T / (N // 4) <= 0.6 else []
    cfg = config or SolverConfig(method="jacobi_newton", tol_residual=1e-8, max_iters=1_500_000,
                                 refinement=levels)
    return ProblemSpec(
        "fuel", fuel_lagrangian(W), 1, 2, BoundaryData(start, end), N, T=T, scheme="trapezoidal",
        config=cfg, wind=W, params={"T": T}, start_N=N // 4 if levels else None,
    )


def fuel_interpolation_lagrangian(c=50.0, W: Optional[WindField] = None):
    W = W or fuel_wind()
    t, (x, y, dx, dy, ddx, ddy) = jet_symbols(2, 2, ["x", "y"])
    sub = {X_SYM: x, Y_SYM: y, T_SYM: t}
    W1, W2 = (e.subs(sub, simultaneous=True) for e in W.exprs)
    J = [[sympy.diff(e, v).subs(sub, simultaneous=True) for v in (X_SYM, Y_SYM)] for e in W.exprs]
    expr = sympy.Rational(1, 2) * (
        (dx - W1) ** 2 + (dy - W2) ** 2
        + c * (ddx - J[0][0] * dx - J[0][1] * dy) ** 2
        + c * (ddy - J[1][0] * dx - J[1][1] * dy) ** 2
    )
    return SymbolicLagrangian(2, 2, expr, t, [x, y, dx, dy, ddx, ddy])


def fuel_interpolation_problem(N=240, T=60.0, c=50.0, start=(0.0, 0.0), end=(3.0, 5.0),
                               knots=(((1.0, 3.0), 20.0), ((5.0, 2.0), 40.0)), scheme="lobatto2",
                               config=None) -> ProblemSpec:
    """Fuel plus ``c``-weighted control variation, through waypoints at prescribed times."""
    W = fuel_wind()
    h = T / N
    ks = []
    for pos, tk in knots:
        idx = tk / h
        if abs(idx - round(idx)) > 1e-9:
            raise InvalidArgument(f"knot time {tk} is not on the grid of step {h}")
        ks.append(Knot(int(round(idx)), pos))
    boundary = BoundaryData(list(start) + [0.0, 0.0], list(end) + [0.0, 0.0], ks)
    # contraction is 1 - O(h^4) here; the sweep budget caps the run at a few minutes
    # coarse levels only when every knot lands on them
    coarse = N % 4 == 0 and all(k.index % 4 == 0 for k in ks)
    levels = [(N // 2, 100_000), (N, 100_000)] if coarse else []
    cfg = config or SolverConfig(method="jacobi_newton", tol_residual=1e-8, max_iters=300_000,
                                 refinement=levels)
    return ProblemSpec(
        "fuel_interpolation", fuel_interpolation_lagrangian(c, W), 2, 2, boundary, N, T=T, scheme=scheme,
        config=cfg, wind=W, params={"c": c, "T": T}, start_N=N // 4 if levels else None,
    )


# Normalised units: Sun-Earth distance 1, G (m_S + m_E) = 1, time in years / (2 pi).
# These values are standard astronomical data, not taken from any figure.
AU_KM = 149_597_870.7
TIME_UNIT_DAYS = 365.25 / (2 * np.pi)
FOUR_BODY_DEFAULTS = {
    "m_E": 3.003489e-6,
    "m_M": 3.694303e-8,
    "r_M": 384_400.0 / AU_KM,
    # synodic lunar month seen from the Sun-Earth rotating frame
    "omega_M": 2 * np.pi * TIME_UNIT_DAYS / 29.530589,
    "theta_M0": np.pi / 2 - 0.9,
    "r_geo": 42_164.0 / AU_KM,
    "phi_geo": np.pi,
    "days": 8.0,
    "coriolis": "physical",
    "softening": None,
}


def _four_body_omega(p, x, y, t):
    m_E, m_M = p["m_E"], p["m_M"]
    m_S = 1.0 - m_E
    th = p["omega_M"] * t + p["theta_M0"]
    xm, ym = p["r_M"] * sympy.cos(th), p["r_M"] * sympy.sin(th)
    return (
        ((x + 1) ** 2 + y**2) / 2
        + m_S / sympy.sqrt((x + 1) ** 2 + y**2)
        + m_E / sympy.sqrt(x**2 + y**2)
        + m_M / sympy.sqrt((x - xm) ** 2 + (y - ym) ** 2)
    )


class _Softened(ContinuousLagrangian):
    """Raise :class:`SingularPotential` inside the softening radius of a primary."""

    def __init__(self, inner, p):
        super().__init__(inner.gamma, inner.dim)
        self.inner, self.p = inner, p
        self.derivatives_analytic = inner.derivatives_analytic

    def _check(self, t, z):
        z = np.atleast_2d(z)
        t = np.broadcast_to(np.asarray(t, float), (z.shape[0],))
        th = self.p["omega_M"] * t + self.p["theta_M0"]
        moon = self.p["r_M"] * np.stack([np.cos(th), np.sin(th)], axis=1)
        r = self.p["softening"]
        for c in (np.zeros_like(moon), moon, np.array([[-1.0, 0.0]])):
            if np.any(np.linalg.norm(z[:, :2] - c, axis=1) < r):
                raise SingularPotential("trajectory enters the softening radius of a primary")

    def eval(self, t, z):
        self._check(t, z)
        return self.inner.eval(t, z)

    def grad(self, t, z):
        self._check(t, z)
        return self.inner.grad(t, z)

    def hess(self, t, z):
        self._check(t, z)
        return self.inner.hess(t, z)


def four_body_lagrangian(**params):
    p = dict(FOUR_BODY_DEFAULTS, **params)
    t, (x, y, dx, dy, ddx, ddy) = jet_symbols(2, 2, ["x", "y"])
    Om = _four_body_omega(p, x, y, t)
    sign = {"physical": 1, "as_printed": -1}[p["coriolis"]]
    expr = (ddx - 2 * dy - sympy.diff(Om, x)) ** 2 + (ddy + sign * 2 * dx - sympy.diff(Om, y)) ** 2
    L = SymbolicLagrangian(2, 2, expr, t, [x, y, dx, dy, ddx, ddy])
    L.omega = sympy.lambdify((t, x, y), Om, "numpy")
    L.omega_grad = sympy.lambdify((t, x, y), [sympy.diff(Om, x), sympy.diff(Om, y)], "numpy")
    if p["softening"]:
        return _Softened(L, p)
    return L


def moon_position(t, p=None):
    p = dict(FOUR_BODY_DEFAULTS, **(p or {}))
    th = p["omega_M"] * np.asarray(t, float) + p["theta_M0"]
    return p["r_M"] * np.stack([np.cos(th), np.sin(th)], axis=-1)


def four_body_endpoints(p):
    """Geosynchronous start and Earth-Moon L5 arrival, both as ``(x, y, x', y')``."""
    T = p["days"] / TIME_UNIT_DAYS
    # geosynchronous: one sidereal day per revolution, minus the frame rotation
    w = 2 * np.pi * TIME_UNIT_DAYS / 0.99726968 - 1.0
    phi, r = p["phi_geo"], p["r_geo"]
    left = [r * np.cos(phi), r * np.sin(phi), -r * w * np.sin(phi), r * w * np.cos(phi)]
    # L5 trails the Moon by 60 degrees and co-rotates with it
    th = p["omega_M"] * T + p["theta_M0"] - np.pi / 3
    rm, wm = p["r_M"], p["omega_M"]
    right = [rm * np.cos(th), rm * np.sin(th), -rm * wm * np.sin(th), rm * wm * np.cos(th)]
    return T, np.array(left), np.array(right)


def sundman_position_monitor(r0=None):
    """``g_d = (|midpoint|^2 + r0^2)^(3/4)``: small steps near the Earth."""
    r0 = FOUR_BODY_DEFAULTS["r_geo"] if r0 is None else r0

    def g(x0, x1):
        mid = 0.5 * (np.atleast_2d(x0)[:, :2] + np.atleast_2d(x1)[:, :2])
        return (np.sum(mid**2, axis=1) + r0**2) ** 0.75

    return g


def four_body_problem(N=100, alpha=1.0, via=None, adaptive=False, config=None, **params) -> ProblemSpec:
    """Least-thrust transfer from geosynchronous orbit to the Earth-Moon L5 point in 8 days.

    The guess is two straight segments through ``via``, by default a point
    beyond the lunar orbit.  ``adaptive`` attaches a position-only Sundman
    monitor.
    """
    p = dict(FOUR_BODY_DEFAULTS, **params)
    T, left, right = four_body_endpoints(p)
    boundary = BoundaryData(left, right)
    if via is None:
        ang = p["theta_M0"] + 0.5 * p["omega_M"] * T
        via = 1.4 * p["r_M"] * np.array([np.cos(ang), np.sin(ang)])
    cfg = config or SolverConfig(method="jacobi_newton", tol_residual=1e-8, max_iters=300_000,
                                 adaptive_sundman="position" if adaptive else None)
    return ProblemSpec(
        "four_body", four_body_lagrangian(**params), 2, 2, boundary, N, T=T, scheme="alpha_trapezoidal",
        scheme_params={"alpha": alpha}, config=cfg, params=p, waypoints=[list(map(float, via))],
        monitor=sundman_position_monitor() if adaptive else None,
    )


# -- small reference problems -------------------------------------------------


def free_particle_problem(N=10, h=None, start=0.0, end=1.0, dim=1) -> ProblemSpec:
    start = np.atleast_1d(np.asarray(start, float))
    end = np.atleast_1d(np.asarray(end, float))
    dim = start.size
    T = 1.0 if h is None else h * N
    model = free_particle_model(T / N, dim=dim)
    return ProblemSpec("free_particle", None, 1, dim, BoundaryData(start, end), N, T=T,
                       config=SolverConfig(tol_residual=1e-12), model=lambda times: model)


def harmonic_lagrangian(omega=1.0):
    t, (x, dx) = jet_symbols(1, 1, ["x"])
    expr = (dx**2 - omega**2 * x**2) / 2

    def el_rhs(t, y):
        return np.array([y[1], -omega**2 * y[0]])

    return SymbolicLagrangian(1, 1, expr, t, [x, dx], el_rhs=el_rhs)


def harmonic_oscillator_problem(N=20, h=0.1, q0=1.0, qN=None, omega=1.0) -> ProblemSpec:
    """``L = (x'^2 - omega^2 x^2)/2`` with the trapezoidal rule.

    Without ``qN`` the right end is the exact solution ``cos(omega T)``.
    """
    T = N * h
    qN = np.cos(omega * T) * q0 if qN is None else qN
    return ProblemSpec("harmonic_oscillator", harmonic_lagrangian(omega), 1, 1, BoundaryData([q0], [qN]), N,
                       T=T, config=SolverConfig(tol_residual=1e-12))


def quadratic_problem(N=10, M=None, h=1.0, start=None, end=None) -> ProblemSpec:
    """``L_d = (q1 - q0)^T M (q1 - q0) / (2h)``, whose Hessian is ``K (x) M / h``."""
    M = np.eye(1) if M is None else np.atleast_2d(np.asarray(M, float))
    n = M.shape[0]
    start = np.zeros(n) if start is None else start
    end = np.ones(n) if end is None else end
    model = free_particle_model(h, M=M)
    return ProblemSpec("quadratic", None, 1, n, BoundaryData(start, end), N, T=h * N,
                       config=SolverConfig(tol_residual=1e-12), model=lambda times: model)


def indefinite_toy_problem(N=4) -> ProblemSpec:
    """``L_d(q0, q1) = q0 q1``: per-step Hessian with eigenvalues +-1."""
    model = QuadraticModel(1, 1, np.array([[0.0, 1.0], [1.0, 0.0]]))
    return ProblemSpec("indefinite_toy", None, 1, 1, BoundaryData([1.0], [2.0]), N,
                       config=SolverConfig(max_iters=50), model=lambda times: model)


PROBLEMS = {
    "zermelo_static": zermelo_static_problem,
    "zermelo_time_varying": zermelo_time_varying_problem,
    "fuel": fuel_problem,
    "fuel_interpolation": fuel_interpolation_problem,
    "four_body": four_body_problem,
    "free_particle": free_particle_problem,
    "harmonic_oscillator": harmonic_oscillator_problem,
    "quadratic": quadratic_problem,
    "indefinite_toy": indefinite_toy_problem,
}


def get_problem(name: str, **kwargs) -> ProblemSpec:
    try:
        builder = PROBLEMS[name]
    except KeyError:
        raise InvalidArgument(f"unknown problem {name!r}; known: {sorted(PROBLEMS)}") from None
    return builder(**kwargs)
