"""Independent reference computations shared by several test modules."""

import mpmath
import numpy as np


def sym3_eigs(M):
    """Closed-form eigenvalues of one symmetric 3x3 matrix (trigonometric cubic solution).

    Evaluated in 40-digit arithmetic: the formula loses half its digits at a
    double root, which A always has.
    """
    with mpmath.workdps(40):
        m = [[mpmath.mpf(float(M[i, j])) for j in range(3)] for i in range(3)]
        q = (m[0][0] + m[1][1] + m[2][2]) / 3
        p = mpmath.sqrt(((m[0][0] - q) ** 2 + (m[1][1] - q) ** 2 + (m[2][2] - q) ** 2
                         + 2 * (m[0][1] ** 2 + m[0][2] ** 2 + m[1][2] ** 2)) / 6)
        if p == 0:
            return np.full(3, float(q))
        b = [[(m[i][j] - (q if i == j else 0)) / p for j in range(3)] for i in range(3)]
        det = (b[0][0] * (b[1][1] * b[2][2] - b[1][2] * b[2][1]) - b[0][1] * (b[1][0] * b[2][2] - b[1][2] * b[2][0])
               + b[0][2] * (b[1][0] * b[2][1] - b[1][1] * b[2][0]))
        phi = mpmath.acos(max(min(det / 2, 1), -1)) / 3
        e1 = q + 2 * p * mpmath.cos(phi)
        e3 = q + 2 * p * mpmath.cos(phi + 2 * mpmath.pi / 3)
        e2 = 3 * q - e1 - e3
        return np.sort(np.array([float(e1), float(e2), float(e3)]))
