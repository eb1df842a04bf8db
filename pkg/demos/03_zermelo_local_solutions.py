"""
Minimum-time navigation: several local solutions
================================================

The Randers metric F turns minimum time into a geodesic problem.  Different
polyline starting guesses relax to different local minima of the travel time.
"""

import numpy as np
from varint.problems import get_problem, travel_time

for via in [(), ((3.0, 4.0),), ((3.0, -1.0),)]:
    p = get_problem("zermelo_static", waypoints=via)
    rep = p.solve()
    T = travel_time(rep.final, p.F, 1.0 / rep.final.N)
    mid = rep.final.positions[rep.final.N // 2]
    print(f"guess via {list(via)}: converged={rep.converged} sweeps={rep.iterations} "
          f"time={T:.4f} midpoint={mid.round(3)}")
