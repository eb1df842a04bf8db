"""
Least-fuel path through a wind field
====================================

q' = u + W(q), minimise the integral of |u|^2 / 2 over a fixed duration.
Optimal paths drift towards the equilibrium of W and wait there.
A coarse grid (N=50) keeps the demo quick; the CLI runs N=200.
"""

import numpy as np
from scipy.optimize import fsolve
from varint import SolverConfig, check_theorem_conditions
from varint.problems import get_problem

p = get_problem("fuel", N=50)
rep = p.solve(SolverConfig(tol_residual=1e-10, max_iters=100_000))
print(f"converged={rep.converged} after {rep.iterations} sweeps ({rep.wall_time:.1f}s)")

# where does the wind vanish?
W = p.wind
eq = fsolve(lambda x: W.eval(0.0, x[0], x[1]), [3.0, 0.5])
dist = np.min(np.linalg.norm(rep.final.positions - eq, axis=1))
print(f"W equilibrium at {eq.round(4)}, closest approach {dist:.3f}")

# the sufficient conditions at the solution
diag = check_theorem_conditions(p.model_factory()(rep.final.times), rep.final)
print(f"{diag.guarantee}: global PD {diag.global_pd}, rho(J) ~ {diag.spectral_radius_estimate:.6f}")
