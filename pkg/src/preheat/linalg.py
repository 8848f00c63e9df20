"""Small linear-algebra helpers shared by the solvers."""

from __future__ import annotations

import numpy as np
from scipy.linalg.lapack import dgtsv


def solve_tridiagonal(lower: np.ndarray, diag: np.ndarray, upper: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve a tridiagonal system (one or many right-hand sides) with LAPACK gtsv."""
    _, _, _, x, info = dgtsv(lower, diag, upper, rhs)
    if info != 0:
        raise np.linalg.LinAlgError(f"tridiagonal solve failed (info={info})")
    return x
