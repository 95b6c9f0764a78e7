"""Independent reference implementations used as test oracles."""
from __future__ import annotations

import numpy as np


def greedy_residual_selection(A, m, tie_rtol=1e-10):
    """Pick, ``m`` times, the column with the largest residual after
    orthogonal projection onto the span of the columns already picked.

    Works on the columns themselves (no Gramian, no Cholesky); ties within
    ``tie_rtol`` of the maximum go to the lowest index.
    """
    A = np.asarray(A, dtype=np.float64)
    chosen = []
    for _ in range(m):
        if chosen:
            Q, _ = np.linalg.qr(A[:, chosen])
            R = A - Q @ (Q.T @ A)
        else:
            R = A
        res = np.einsum("ij,ij->j", R, R)
        res[chosen] = -np.inf
        top = res.max()
        chosen.append(int(np.flatnonzero(res >= top - tie_rtol * abs(top))[0]))
    return chosen


def ridge_normal_equations(B, t, lam):
    """Dense solve of ``(B.T B + lam I) C = B.T t``."""
    B = np.asarray(B, dtype=np.float64)
    return np.linalg.solve(B.T @ B + lam * np.eye(B.shape[1]), B.T @ t)


def gaussian_kde_direct(samples, points, h):
    """Gaussian kernel density evaluated term by term."""
    out = []
    for x in points:
        s = 0.0
        for xi in samples:
            u = (x - xi) / h
            s += np.exp(-0.5 * u * u) / np.sqrt(2.0 * np.pi)
        out.append(s / (len(samples) * h))
    return np.array(out)
