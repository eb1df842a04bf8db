"""Independent reference computations for the test-suite.

Nothing here calls the structure the library exploits (block tridiagonality,
closed forms, the relaxation itself): solutions come from dense Newton on the
full DEL system, determinants from cofactor expansion, Hessians from finite
differences of the scalar action.
"""

import numpy as np
from math import factorial
from scipy.optimize import brentq


# -- matrices ------------------------------------------------------------------


def printed_gamma3(h):
    """The gamma = 3 matrices as written out entry by entry."""
    A = np.array([[1, h, h**2 / 2], [0, 1, h], [0, 0, 1]], float)
    B = np.array([[h**5 / 120, h**4 / 24, h**3 / 6], [h**4 / 24, h**3 / 6, h**2 / 2], [h**3 / 6, h**2 / 2, h]])
    C = np.array([[h**5 / 20, h**4 / 8, h**3 / 6], [h**4 / 8, h**3 / 3, h**2 / 2], [h**3 / 6, h**2 / 2, h]])
    D = np.diag([1.0, -1.0, 1.0])
    E = np.fliplr(np.eye(3))
    L = np.array([[1, 0, 0], [5 / (2 * h), 1, 0], [10 / (3 * h**2), 4 / h, 1]])
    U = np.array([[h**5 / 20, h**4 / 8, h**3 / 6], [0, h**3 / 48, h**2 / 12], [0, 0, h / 9]])
    return dict(A=A, B=B, C=C, D=D, E=E, L=L, U=U)


def cofactor_det(M):
    M = np.asarray(M, float)
    n = M.shape[0]
    if n == 1:
        return M[0, 0]
    return sum((-1) ** j * M[0, j] * cofactor_det(np.delete(M[1:], j, axis=1)) for j in range(n))


def unpivoted_pivots(M):
    M = np.array(M, float)
    n = M.shape[0]
    piv = []
    for i in range(n):
        piv.append(M[i, i])
        M[i + 1 :] -= np.outer(M[i + 1 :, i] / M[i, i], M[i])
    return np.array(piv)


def det_C_product(gamma, h):
    out = h ** (gamma * gamma)
    for a in range(gamma):
        out *= factorial(a) / factorial(gamma + a)
    return out


# -- discrete systems ----------------------------------------------------------


def action(model, nodes):
    N = nodes.shape[0] - 1
    return float(np.sum(model.eval(np.arange(N), nodes[:-1], nodes[1:])))


def residual_vector(model, nodes, free):
    """DEL residual from the model's first derivatives, restricted to free entries."""
    N = nodes.shape[0] - 1
    r = np.zeros_like(nodes)
    for k in range(1, N):
        r[k] = model.grad2(k - 1, nodes[k - 1], nodes[k]) + model.grad1(k, nodes[k], nodes[k + 1])
    return r[free]


def dense_newton(model, nodes, free, tol=1e-13, maxit=60, step=1e-6):
    """Newton on all free unknowns at once with a finite-difference Jacobian."""
    x = np.array(nodes, float)
    for _ in range(maxit):
        r = residual_vector(model, x, free)
        if np.max(np.abs(r)) < tol:
            return x
        n = r.size
        J = np.empty((n, n))
        idx = np.argwhere(free)
        for j, (a, b) in enumerate(idx):
            e = np.zeros_like(x)
            e[a, b] = step
            J[:, j] = (residual_vector(model, x + e, free) - residual_vector(model, x - e, free)) / (2 * step)
        dx = np.linalg.solve(J, -r)
        x[free] += dx
    r = residual_vector(model, x, free)
    if np.max(np.abs(r)) > 1e-9:
        raise RuntimeError(f"dense Newton did not converge: {np.max(np.abs(r))}")
    return x


def fd_action_hessian(model, nodes, step=1e-4):
    """Dense Hessian of the action in the interior nodes by central differences."""
    x = np.array(nodes, float)
    interior = [(k, j) for k in range(1, x.shape[0] - 1) for j in range(x.shape[1])]
    n = len(interior)
    H = np.empty((n, n))
    f0 = action(model, x)
    for p, (a, b) in enumerate(interior):
        for q, (c, d) in enumerate(interior[p:], start=p):
            def f(sa, sc):
                y = x.copy()
                y[a, b] += sa
                y[c, d] += sc
                return action(model, y)
            if p == q:
                v = (f(step, 0) - 2 * f0 + f(-step, 0)) / step**2
            else:
                v = (f(step, step) - f(step, -step) - f(-step, step) + f(-step, -step)) / (4 * step**2)
            H[p, q] = H[q, p] = v
    return H


def jacobi_matrix(Hdense, d):
    """``-D^{-1} (H - D)`` with ``D`` the block diagonal of width ``d``."""
    D = np.zeros_like(Hdense)
    for i in range(0, Hdense.shape[0], d):
        D[i : i + d, i : i + d] = Hdense[i : i + d, i : i + d]
    return -np.linalg.solve(D, Hdense - D)


def harmonic_sequential_end(q0, q1, N, h, omega=1.0):
    """Shoot the trapezoidal DEL recurrence of ``(v^2 - w^2 q^2)/2`` forward from ``q0, q1``."""
    q = [q0, q1]
    for _ in range(N - 1):
        # (q_k - q_{k-1})/h - h w^2 q_k/2 - (q_{k+1} - q_k)/h - h w^2 q_k/2 = 0
        q.append(2 * q[-1] - q[-2] - (h * omega) ** 2 * q[-1])
    return np.array(q)


# -- navigation ----------------------------------------------------------------


def randers_time(v, w):
    """Time to cover displacement ``v`` at unit airspeed in constant drift ``w``.

    Solves ``|v / F - w| = 1`` for ``F > 0`` by bracketing.
    """
    v, w = np.asarray(v, float), np.asarray(w, float)
    f = lambda F: np.linalg.norm(v / F - w) - 1.0  # noqa: E731
    return brentq(f, 1e-9, 1e9, xtol=1e-15, rtol=1e-15)


def damped_newton_root(F, J, x0, tol=1e-13, maxit=100):
    x = np.asarray(x0, float)
    for _ in range(maxit):
        r = F(x)
        if np.linalg.norm(r) < tol:
            return x
        dx = np.linalg.solve(J(x), -r)
        t = 1.0
        while np.linalg.norm(F(x + t * dx)) > (1 - 1e-4 * t) * np.linalg.norm(r) and t > 1e-8:
            t /= 2
        x = x + t * dx
    return x
