"""
Adaptive steps by a Sundman rescaling
=====================================

Position-only monitor g_d = (|midpoint|^2 + r0^2)^(3/4): steps shrink near
the Earth.  After each sweep the grid is rescaled so that dt_k = c g_d and
t_N = T.
"""

import numpy as np
from varint import SolverConfig
from varint.problems import get_problem

p = get_problem("four_body", adaptive=True)
rep = p.solve(SolverConfig(max_iters=500, adaptive_sundman="position"))
dt = np.diff(rep.final.times)
g = p.monitor(rep.final.nodes[:-1], rep.final.nodes[1:])
print(f"dt range {dt.min():.3e} .. {dt.max():.3e}; t_N - T = {rep.final.times[-1] - p.T:.1e}")
print(f"spread of dt/g: {np.ptp(dt / g) / np.mean(dt / g):.1e}")
