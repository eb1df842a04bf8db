import numpy as np
import pytest
import sympy
from scipy.integrate import solve_ivp

from varint import DriftTooStrong, SingularPotential, SolverConfig, Trajectory, discrete_action

import varint.problems as P
from varint.solver import update_time_grid_zermelo

from oracles import damped_newton_root, randers_time


# -- Randers metric ------------------------------------------------------------------


def test_randers_no_wind_is_euclidean():
    W = P.WindField(0, 0)
    rng = np.random.default_rng(0)
    for _ in range(20):
        q, v = rng.normal(size=2), rng.normal(size=2)
        assert P.randers_F(W, 0.0, q, v) == pytest.approx(np.linalg.norm(v), rel=1e-14)


@pytest.mark.parametrize("w", [0.0, 0.3, -0.5, 0.9])
def test_randers_tailwind(w):
    W = P.WindField(w, 0)
    F = P.randers_F(W, 0.0, [0.0, 0.0], [1.0, 0.0])
    assert F == pytest.approx(1 / (1 + w), rel=1e-13)
    assert F == pytest.approx(randers_time([1.0, 0.0], [w, 0.0]), rel=1e-10)


def test_randers_matches_relative_velocity_oracle():
    rng = np.random.default_rng(1)
    W = P.zermelo_static_wind()
    for _ in range(50):
        q, v = rng.uniform(-1, 7, 2), rng.normal(size=2)
        w = W.eval(0.0, q[0], q[1])
        assert P.randers_F(W, 0.0, q, v) == pytest.approx(randers_time(v, w), rel=1e-9)


def test_randers_homogeneity_and_square():
    rng = np.random.default_rng(2)
    W = P.zermelo_static_wind()
    for _ in range(20):
        q, v = rng.uniform(0, 6, 2), rng.normal(size=2)
        F = P.randers_F(W, 0.0, q, v)
        assert F > 0
        for lam in (0.5, 2.0, 10.0):
            assert P.randers_F(W, 0.0, q, lam * v) == pytest.approx(lam * F, rel=1e-12)
        assert P.randers_F2(W, 0.0, q, v) == pytest.approx(F**2, rel=1e-14)
    assert P.randers_F2(W, 0.0, [1.0, 1.0], [0.0, 0.0]) == 0.0


def test_randers_drift_too_strong():
    with pytest.raises(DriftTooStrong):
        P.randers_F(P.WindField(1.2, 0), 0.0, [0, 0], [1, 0])
    with pytest.raises(DriftTooStrong):
        P.randers_F(P.WindField(0.6, 0.8), 0.0, [0, 0], [1, 0])


# -- wind fields ------------------------------------------------------------------------


def test_vortex_vanishes_at_centre():
    for a, b in [(2, 2), (4, 4), (2, 5), (5, 1)]:
        R = P.vortex(a, b)
        assert [sympy.simplify(c.subs({P.X_SYM: a, P.Y_SYM: b})) for c in R] == [0, 0]


def test_static_wind_below_unit_speed():
    W = P.zermelo_static_wind()
    m = W.max_speed((-1, 8), (-2, 7), n=400)
    assert 0.9 < m < 1.0


def test_time_varying_wind_bounds():
    W = P.zermelo_time_varying_wind()
    assert W.time_dependent
    xs, ys = np.meshgrid(np.linspace(-2, 9, 200), np.linspace(-2, 9, 200))
    for t in np.linspace(0, 13, 7):
        assert np.max(np.linalg.norm(W.eval(t, xs, ys), axis=-1)) <= 0.8 + 1e-15
    x = np.linspace(-3, 3, 50)
    for t in (0.0, 1.3, 5.0):
        np.testing.assert_allclose(W.eval(t, x, -2 * x), 0.0, atol=1e-15)


def test_wind_jacobian_matches_fd():
    W = P.fuel_wind()
    rng = np.random.default_rng(3)
    for _ in range(20):
        x, y = rng.uniform(-2, 8, 2)
        J = W.jacobian(0.0, x, y)
        e = 1e-6
        fd = np.stack([(W.eval(0.0, x + e, y) - W.eval(0.0, x - e, y)) / (2 * e),
                       (W.eval(0.0, x, y + e) - W.eval(0.0, x, y - e)) / (2 * e)], axis=-1)
        np.testing.assert_allclose(J, fd, atol=1e-8)


# -- fuel problems --------------------------------------------------------------------------


def test_fuel_lagrangian_nonnegative_and_zero_on_wind():
    L = P.fuel_lagrangian()
    W = P.fuel_wind()
    rng = np.random.default_rng(4)
    z = rng.uniform(-3, 8, size=(200, 4))
    assert np.all(L.eval(np.zeros(200), z) >= 0)
    w = W.eval(0.0, z[:, 0], z[:, 1])
    on = np.c_[z[:, :2], w]
    np.testing.assert_allclose(L.eval(np.zeros(200), on), 0.0, atol=1e-15)
    # velocity Hessian is the identity
    H = L.hess(np.zeros(5), z[:5])
    np.testing.assert_allclose(H[:, 2:, 2:], np.broadcast_to(np.eye(2), (5, 2, 2)), atol=1e-12)


def test_fuel_wind_equilibrium():
    W = P.fuel_wind()
    root = damped_newton_root(lambda p: W.eval(0.0, p[0], p[1]), lambda p: W.jacobian(0.0, p[0], p[1]),
                              [3.0, 0.5])
    assert np.linalg.norm(W.eval(0.0, root[0], root[1])) < 1e-8
    assert 0 < root[0] < 6 and -1 < root[1] < 5


def test_fuel_interpolation_reduces_to_fuel():
    L0 = P.fuel_interpolation_lagrangian(c=0.0)
    L = P.fuel_lagrangian()
    rng = np.random.default_rng(5)
    z = rng.uniform(-3, 8, size=(100, 6))
    t = rng.uniform(0, 60, 100)
    np.testing.assert_allclose(L0.eval(t, z), L.eval(t, z[:, :4]), rtol=1e-13, atol=1e-14)


def test_fuel_interpolation_on_wind_curve():
    c = 50.0
    Lc = P.fuel_interpolation_lagrangian(c=c)
    W = P.fuel_wind()
    rng = np.random.default_rng(6)
    q = rng.uniform(0, 6, size=(50, 2))
    v = W.eval(0.0, q[:, 0], q[:, 1])
    a = rng.normal(size=(50, 2))
    J = W.jacobian(0.0, q[:, 0], q[:, 1])
    ctrl = a - np.einsum("kij,kj->ki", J, v)
    np.testing.assert_allclose(Lc.eval(np.zeros(50), np.c_[q, v, a]), c / 2 * np.sum(ctrl**2, axis=1), rtol=1e-12)


def test_fuel_interpolation_defaults():
    p = P.get_problem("fuel_interpolation")
    assert (p.N, p.T, p.params["c"]) == (240, 60.0, 50.0)
    assert [k.index for k in p.boundary.knots] == [80, 160]
    np.testing.assert_array_equal(p.boundary.left, [0, 0, 0, 0])
    np.testing.assert_array_equal(p.boundary.right, [3, 5, 0, 0])


def test_fuel_solvers_agree():
    p = P.get_problem("fuel", N=50)
    # the problem has several DEL solutions: from the raw straight line, block
    # Jacobi (damped, it diverges otherwise) lands on a different one than
    # Jacobi-Newton.  A few shared sweeps put both in the same basin.
    start = p.solve(SolverConfig(tol_residual=1e-1)).final
    jn = p.solve(SolverConfig(method="jacobi_newton", tol_residual=1e-11, max_iters=100_000), guess=start)
    j = p.solve(SolverConfig(method="jacobi", tol_residual=1e-11, max_iters=100_000), guess=start)
    assert jn.converged and j.converged
    assert np.max(np.abs(jn.final.nodes - j.final.nodes)) < 1e-6


# -- four-body -----------------------------------------------------------------------------


def test_four_body_lagrangian_vanishes_on_ballistic_arc():
    L = P.four_body_lagrangian()

    def rhs(t, y):
        gx, gy = L.omega_grad(t, y[0], y[1])
        return [y[2], y[3], 2 * y[3] + gx, -2 * y[2] + gy]

    # a loose arc about the Earth, inside the lunar orbit
    r = P.FOUR_BODY_DEFAULTS["r_M"] * 0.6
    y0 = [r, 0.0, 0.0, np.sqrt(P.FOUR_BODY_DEFAULTS["m_E"] / r) - r]
    sol = solve_ivp(rhs, (0, 0.02), y0, rtol=1e-12, atol=1e-16, dense_output=True)
    ts = np.linspace(0, 0.02, 40)
    ys = sol.sol(ts)
    acc = np.array([rhs(t, y)[2:] for t, y in zip(ts, ys.T)])
    z = np.c_[ys.T, acc]
    vals = L.eval(ts, z)
    scale = np.max(np.abs(acc)) ** 2
    assert np.max(np.abs(vals)) <= 1e-20 * scale + 1e-24
    # and a non-ballistic acceleration costs its squared control
    z2 = z.copy()
    z2[:, 4] += 1.0
    np.testing.assert_allclose(L.eval(ts, z2), 1.0, rtol=1e-6)


def test_four_body_potential_gradient():
    L = P.four_body_lagrangian()
    rng = np.random.default_rng(7)
    for _ in range(100):
        t = rng.uniform(0, 0.15)
        rad = rng.uniform(1e-4, 5e-3)
        ang = rng.uniform(0, 2 * np.pi)
        x, y = rad * np.cos(ang), rad * np.sin(ang)
        e = 1e-8
        fd = [(L.omega(t, x + e, y) - L.omega(t, x - e, y)) / (2 * e),
              (L.omega(t, x, y + e) - L.omega(t, x, y - e)) / (2 * e)]
        g = L.omega_grad(t, x, y)
        np.testing.assert_allclose(g, fd, rtol=1e-6, atol=1e-6 * np.linalg.norm(g))


def test_four_body_softening():
    L = P.four_body_lagrangian(softening=1e-5)
    z = np.array([[1e-6, 0.0, 0.0, 0.0, 0.0, 0.0]])
    with pytest.raises(SingularPotential):
        L.eval(np.zeros(1), z)
    far = np.array([[1e-3, 1e-3, 0.0, 0.0, 0.0, 0.0]])
    assert np.isfinite(P.four_body_lagrangian().eval(np.zeros(1), far)[0])
    assert L.eval(np.zeros(1), far)[0] == pytest.approx(P.four_body_lagrangian().eval(np.zeros(1), far)[0])


def test_four_body_defaults():
    p = P.get_problem("four_body")
    assert (p.gamma, p.dim, p.N) == (2, 2, 100)
    assert p.T == pytest.approx(8.0 / P.TIME_UNIT_DAYS)
    g = p.initial_guess()
    assert np.array_equal(g.nodes[0], p.boundary.left) and np.array_equal(g.nodes[-1], p.boundary.right)
    # two straight segments: the direction changes only around the bend
    d = np.diff(g.positions, axis=0)
    turn = np.abs(d[1:, 0] * d[:-1, 1] - d[1:, 1] * d[:-1, 0])
    bends = np.flatnonzero(turn > 1e-6 * np.max(np.abs(d)) ** 2)
    assert 1 <= bends.size <= 2 and np.ptp(bends) <= 1


# -- travel time ------------------------------------------------------------------------


def straight(a, b, N):
    s = np.linspace(0, 1, N + 1)[:, None]
    return Trajectory((1 - s) * np.asarray(a) + s * np.asarray(b), np.linspace(0, 1, N + 1), 1, 2)


def test_travel_time_no_wind():
    W = P.WindField(0, 0)
    F = lambda t, q, v: P.randers_F(W, t, q, v)  # noqa: E731
    assert P.travel_time(straight([0, 0], [3, 4], 10), F) == pytest.approx(5.0, rel=1e-14)


def test_travel_time_tailwind():
    w = 0.4
    W = P.WindField(w, 0)
    F = lambda t, q, v: P.randers_F(W, t, q, v)  # noqa: E731
    for N in (5, 50):
        assert P.travel_time(straight([0, 0], [7, 0], N), F) == pytest.approx(7 / (1 + w), rel=1e-13)


def test_travel_time_first_order_in_h():
    W = P.zermelo_static_wind()
    F = lambda t, q, v: P.randers_F(W, t, q, v)  # noqa: E731

    def curve(N):
        s = np.linspace(0, 1, N + 1)
        pos = np.c_[6 * s, 2 * s + 1.5 * np.sin(np.pi * s)]
        return Trajectory(pos, s, 1, 2)

    T = [P.travel_time(curve(N), F) for N in (100, 200, 400, 800)]
    d = np.abs(np.diff(T))
    ratios = d[:-1] / d[1:]
    assert np.all((ratios > 1.6) & (ratios < 2.4))
    # the sequential time-grid recurrence accumulates the same sum
    t = update_time_grid_zermelo(curve(100), F)
    assert t[-1] == pytest.approx(T[0], rel=1e-14)


# -- Zermelo solutions ---------------------------------------------------------------------


def test_zermelo_static_second_order_stationarity():
    p = P.get_problem("zermelo_static", N=40)
    rep = p.solve(SolverConfig(damping=0.5, tol_residual=1e-11, max_iters=100_000))
    assert rep.converged
    model = p.model_factory()(rep.final.times)
    S0 = discrete_action(model, rep.final)
    delta = 1e-3
    worst = np.inf
    for k in range(1, rep.final.N):
        for j in range(2):
            for s in (-delta, delta):
                nodes = rep.final.nodes.copy()
                nodes[k, j] += s
                worst = min(worst, discrete_action(model, rep.final.with_nodes(nodes)) - S0)
    assert worst >= -1e-10
    assert P.travel_time(rep.final, p.F) > np.hypot(6, 2) / 2


def test_zermelo_time_varying_grid_is_increasing():
    p = P.get_problem("zermelo_time_varying", N=20)
    g = p.initial_guess()
    t = p.time_grid(g)
    assert t[0] == 0 and np.all(np.diff(t) > 0)
    assert t[-1] == pytest.approx(P.travel_time(g.with_times(t), p.F), rel=1e-14)


def test_registry_ids():
    for name in ("zermelo_static", "zermelo_time_varying", "fuel", "fuel_interpolation", "four_body"):
        assert P.get_problem(name).id == name
