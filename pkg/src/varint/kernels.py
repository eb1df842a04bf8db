"""Compiled kernels for quadrature models of symbolic Lagrangians.

A sweep touches every interval a few times per iteration and the relaxation
can need hundreds of thousands of sweeps, so the per-call overhead of small
numpy operations dominates.  When numba is importable, the Lagrangian, its
gradient and Hessian are emitted as straight-line code, jitted, and driven by
loops over intervals and nodes.  The numpy implementation in
:mod:`varint.discretization` and :mod:`varint.solver` remains the reference
path; ``VARINT_NO_JIT=1`` forces it.
"""

from __future__ import annotations

import hashlib
import importlib.util
import inspect
import os
import sys
import tempfile
import types
from pathlib import Path

import sympy

try:  # optional accelerator
    import numba
except ImportError:  # pragma: no cover
    numba = None

OK, SINGULAR, NONFINITE = 0, 1, 2


def available() -> bool:
    return numba is not None and os.environ.get("VARINT_NO_JIT", "") not in ("1", "true", "yes")


def _lagrangian_parts(L):
    """CSE-reduced ``[L, grad..., upper Hessian...]`` in the symbols ``_t, _z0, _z1, ...``."""
    w = len(L.variables)
    sub = {v: sympy.Symbol(f"_z{i}", real=True) for i, v in enumerate(L.variables)}
    sub[L.t] = sympy.Symbol("_t", real=True)
    grad, upper = L.derivative_exprs()
    exprs = [sympy.sympify(e).xreplace(sub) for e in [L.expr] + list(grad) + list(upper)]
    repl, red = sympy.cse(exprs, symbols=sympy.numbered_symbols("_c"))
    return w, repl, red


def interval_source(L, name="interval") -> str:
    """Straight-line source of the quadrature of one interval.

    ``name(S, wts, tst, k, X0, i0, X1, i1, G1, G2, A, C, B, o) -> L_d`` evaluates
    ``sum_s wts[k, s] L(tst[k, s], S[k, s] @ (X0[i0], X1[i1]))`` and writes its
    gradient and Hessian blocks to row ``o`` of ``G1, G2, A, C, B``.  The node
    width ``d`` and jet width are fixed, so every loop is unrolled; the
    Lagrangian and its derivatives are computed into locals.
    """
    w, repl, red = _lagrangian_parts(L)
    d = L.gamma * L.dim
    d2 = 2 * d
    I = "        "
    L = [f"def {name}(S, wts, tst, k, X0, i0, X1, i1, G1, G2, A, C, B, o):"]
    L += [f"    x{j} = X0[i0, {j}]" for j in range(d)]
    L += [f"    x{d + j} = X1[i1, {j}]" for j in range(d)]
    L += [f"    g{a} = 0.0" for a in range(d2)]
    L += [f"    h{a}_{b} = 0.0" for a in range(d2) for b in range(a, d2)]
    L += ["    val = 0.0", "    for s in range(S.shape[1]):", f"{I}ws = wts[k, s]", f"{I}_t = tst[k, s]"]
    L += [f"{I}s{i}_{a} = S[k, s, {i}, {a}]" for i in range(w) for a in range(d2)]
    L += [f"{I}_z{i} = " + " + ".join(f"s{i}_{a} * x{a}" for a in range(d2)) for i in range(w)]
    L += [f"{I}{c} = {sympy.pycode(v)}" for c, v in repl]
    L += [f"{I}val += ws * ({sympy.pycode(red[0])})"]
    L += [f"{I}gz{i} = {sympy.pycode(red[1 + i])}" for i in range(w)]
    n = 1 + w
    for i in range(w):
        for j in range(i, w):
            L.append(f"{I}H{i}_{j} = {sympy.pycode(red[n])}")
            n += 1

    def H(i, j):
        return f"H{min(i, j)}_{max(i, j)}"

    for i in range(w):
        for b in range(d2):
            L.append(f"{I}HS{i}_{b} = " + " + ".join(f"{H(i, j)} * s{j}_{b}" for j in range(w)))
    for a in range(d2):
        L.append(f"{I}g{a} += ws * (" + " + ".join(f"s{i}_{a} * gz{i}" for i in range(w)) + ")")
        for b in range(a, d2):
            L.append(f"{I}h{a}_{b} += ws * (" + " + ".join(f"s{i}_{a} * HS{i}_{b}" for i in range(w)) + ")")

    def h(a, b):
        return f"h{min(a, b)}_{max(a, b)}"

    for i in range(d):
        L.append(f"    G1[o, {i}] = g{i}")
        L.append(f"    G2[o, {i}] = g{d + i}")
        for j in range(d):
            L.append(f"    A[o, {i}, {j}] = {h(i, j)}")
            L.append(f"    B[o, {i}, {j}] = {h(d + i, d + j)}")
            L.append(f"    C[o, {i}, {j}] = h{i}_{d + j}")
    L.append("    return val")
    return "\n".join(L) + "\n"


_HEADER = """\
# generated by varint.kernels -- do not edit
import math

import numba
import numpy as np

OK, SINGULAR, NONFINITE = 0, 1, 2
njit = numba.njit(nogil=True, cache=True)


@njit
"""

# Drivers shared by every generated module; ``interval`` is the generated kernel.
_DRIVERS = '''
@njit
def batch(S, wts, tst, ks, x0, x1):
    m, d = x0.shape
    val = np.empty(m)
    g1 = np.empty((m, d))
    g2 = np.empty((m, d))
    A = np.empty((m, d, d))
    C = np.empty((m, d, d))
    B = np.empty((m, d, d))
    for i in range(m):
        val[i] = interval(S, wts, tst, ks[i], x0, i, x1, i, g1, g2, A, C, B, i)
    return val, g1, g2, A, C, B

@njit
def local_solve(D1, i1, D2, i2, r, free, k, M, x):
    """``x = (D1 + D2)^{-1} r`` on the free components; fixed components get 0.

    Elimination with partial pivoting in the scratch matrix ``M``
    (``d x (d+1)``, augmented).  Returns a status code.
    """
    d = r.shape[0]
    for i in range(d):
        for j in range(d):
            M[i, j] = D1[i1, i, j] + D2[i2, i, j] if (free[k, i] and free[k, j]) else 0.0
        if free[k, i]:
            M[i, d] = r[i]
        else:
            M[i, i] = 1.0
            M[i, d] = 0.0
    for i in range(d):
        for j in range(d + 1):
            if not np.isfinite(M[i, j]):
                return NONFINITE
    for c in range(d):
        p = c
        best = abs(M[c, c])
        for i in range(c + 1, d):
            if abs(M[i, c]) > best:
                best = abs(M[i, c])
                p = i
        if best == 0.0:
            return SINGULAR
        if p != c:
            for j in range(d + 1):
                tmp = M[c, j]
                M[c, j] = M[p, j]
                M[p, j] = tmp
        for i in range(c + 1, d):
            f = M[i, c] / M[c, c]
            if f != 0.0:
                for j in range(c, d + 1):
                    M[i, j] -= f * M[c, j]
    for i in range(d - 1, -1, -1):
        acc = M[i, d]
        for j in range(i + 1, d):
            acc -= M[i, j] * x[j]
        x[i] = acc / M[i, i]
    for i in range(d):
        if not np.isfinite(x[i]):
            return NONFINITE
    return OK

@njit
def chunk(S, wts, tst, q, free, lo, hi, iters, tol, out):
    """Relax nodes ``lo..hi-1`` of ``q`` into ``out``.

    Returns ``(residual of q, status, node)``.
    """
    d = q.shape[1]
    m = hi - lo + 1  # intervals lo-1 .. hi-1
    g1 = np.empty((m, d))
    g2 = np.empty((m, d))
    A = np.empty((m, d, d))
    C = np.empty((m, d, d))
    B = np.empty((m, d, d))
    for i in range(m):
        k = lo - 1 + i
        interval(S, wts, tst, k, q, k, q, k + 1, g1, g2, A, C, B, i)
    res = 0.0
    # local re-evaluation: row 0 left interval, row 1 right interval
    lg1 = np.empty((2, d))
    lg2 = np.empty((2, d))
    lA = np.empty((2, d, d))
    lB = np.empty((2, d, d))
    lC = np.empty((2, d, d))
    r = np.empty(d)
    x = np.empty(d)
    M = np.empty((d, d + 1))
    for i in range(hi - lo):
        k = lo + i
        for a in range(d):
            r[a] = g2[i, a] + g1[i + 1, a]
            if free[k, a]:
                if not np.isfinite(r[a]):
                    res = np.inf
                elif abs(r[a]) > res:
                    res = abs(r[a])
        st = local_solve(B, i, A, i + 1, r, free, k, M, x)
        if st != OK:
            return res, st, k
        for a in range(d):
            out[i, a] = q[k, a] - x[a]
        for it in range(1, iters):
            interval(S, wts, tst, k - 1, q, k - 1, out, i, lg1, lg2, lA, lC, lB, 0)
            interval(S, wts, tst, k, out, i, q, k + 1, lg1, lg2, lA, lC, lB, 1)
            worst = 0.0
            for a in range(d):
                r[a] = lg2[0, a] + lg1[1, a]
                if free[k, a] and abs(r[a]) > worst:
                    worst = abs(r[a])
            if worst < tol:
                break
            st = local_solve(lB, 0, lA, 1, r, free, k, M, x)
            if st != OK:
                return res, st, k
            for a in range(d):
                out[i, a] -= x[a]
    return res, OK, -1
'''


def module_source(L) -> str:
    """Complete source of the kernel module for a symbolic Lagrangian."""
    return _HEADER + interval_source(L) + "\n\n" + _DRIVERS


def _module_key(L) -> str:
    """Digest of everything the generated module depends on, computed without differentiating."""
    h = hashlib.sha256()
    for part in (sympy.srepr(L.expr), sympy.srepr(L.t), sympy.srepr(list(L.variables)),
                 str((L.gamma, L.dim)), _HEADER, _DRIVERS, inspect.getsource(interval_source),
                 inspect.getsource(_lagrangian_parts), sympy.__version__):
        h.update(part.encode())
        h.update(b"\0")
    return h.hexdigest()[:24]


def cache_dir() -> Path:
    """Where generated modules (and numba's compiled code next to them) live.

    ``VARINT_CACHE_DIR`` overrides the default ``~/.cache/varint``.
    """
    d = os.environ.get("VARINT_CACHE_DIR")
    return Path(d) if d else Path.home() / ".cache" / "varint"


def _load(L):
    name = f"varint_kernel_{_module_key(L)}"
    src = None
    for base in (cache_dir(), Path(tempfile.gettempdir()) / "varint-kernels"):
        path = base / f"{name}.py"
        try:
            if not path.exists():
                src = src or module_source(L)
                base.mkdir(parents=True, exist_ok=True)
                # write-then-rename so concurrent processes never import a partial file
                tmp = base / f"{name}.{os.getpid()}.tmp"
                tmp.write_text(src)
                os.replace(tmp, path)
        except OSError:
            continue
        spec = importlib.util.spec_from_file_location(name, path)
        mod = importlib.util.module_from_spec(spec)
        # numba's cache re-imports the module by name when it loads compiled code
        sys.modules[name] = mod
        spec.loader.exec_module(mod)
        return mod
    # nowhere to write: compile in memory without the on-disk cache
    ns = {}
    exec((src or module_source(L)).replace("cache=True", "cache=False"), ns)
    return types.SimpleNamespace(**ns)


_CACHE = {}


def kernels_for(L):
    """Jitted kernels for a :class:`~varint.discretization.SymbolicLagrangian`, built once per object.

    The generated source goes to a module file in :func:`cache_dir` so that
    numba can reuse the machine code across processes.
    """
    key = id(L)
    hit = _CACHE.get(key)
    if hit is not None and hit[0] is L:
        return hit[1]
    mod = _load(L)
    k = {"batch": mod.batch, "chunk": mod.chunk}
    _CACHE[key] = (L, k)
    return k
