"""
Relaxing a whole trajectory at once
===================================

Every interior node solves its own discrete Euler-Lagrange equation with its
neighbours frozen at the previous sweep.  On the free particle the error
contracts by cos(pi/N) per sweep, the spectral radius of the Jacobi matrix.
"""

import numpy as np
from varint import BoundaryData, Trajectory, assemble_hessian, free_particle_model, jacobi_sweep
from varint import spectral_radius_jacobi

N = 16
model = free_particle_model(1.0 / N)
boundary = BoundaryData([0.0], [1.0])

# a noisy start; the solution is the straight line
rng = np.random.default_rng(0)
exact = np.linspace(0, 1, N + 1)
nodes = exact + np.r_[0, rng.normal(size=N - 1), 0]
traj = Trajectory(nodes[:, None], exact, 1, 1)

errs = []
for sweep in range(200):
    traj = jacobi_sweep(model, traj, boundary)
    errs.append(np.linalg.norm(traj.nodes[:, 0] - exact))

# measured two-sweep contraction vs the spectral radius of the Jacobi matrix
rate = np.sqrt(errs[-1] / errs[-3])
rho = spectral_radius_jacobi(assemble_hessian(model, traj))
print(f"error after 200 sweeps: {errs[-1]:.2e}")
print(f"contraction {rate:.6f}  power iteration {rho:.6f}  cos(pi/N) {np.cos(np.pi / N):.6f}")
