"""
Structure matrices of higher-order interpolation
================================================

A, B, C, D, E for order gamma and step h, the LU factors of C, and the
identities tying them together.
"""

import numpy as np
from varint.matrices import build_matrices, det_C, lu_factors_C, verify_identities

np.set_printoptions(precision=5, suppress=True)
ms = build_matrices(3, 1.0)
print("C =\n", ms.C)
L, U = lu_factors_C(3, 1.0)
print("L =\n", L, "\nU =\n", U)
print("det C =", det_C(3, 1.0))
for g in range(1, 7):
    dev = max(r["deviation"] for r in verify_identities(build_matrices(g, 0.5)).values())
    print(f"gamma={g}: worst identity deviation {dev:.1e}")
