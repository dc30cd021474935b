"""Active-set non-negative least squares (Lawson & Hanson, 1974)."""

from __future__ import annotations

import numpy as np


class NNLSConvergenceError(RuntimeError):
    pass


def nnls(A, b, tol: float = 1e-10, max_iter: int | None = None):
    """Solve ``argmin_x ||Ax - b||_2`` subject to ``x >= 0``.

    Parameters
    ----------
    A : (m, n) array_like
    b : (m,) array_like
    tol : float
        The solver stops once every dual component ``(A^T (b - Ax))_j`` of the
        zero set is ``<= tol``.
    max_iter : int, optional
        Cap on outer iterations, default ``3 * n``.

    Returns
    -------
    x : ndarray, shape (n,)
    rnorm : float
        Residual norm ``||Ax - b||_2``.
    """
    A = np.asarray_chkfinite(A, dtype=float)
    b = np.asarray_chkfinite(b, dtype=float)
    if A.ndim != 2:
        raise ValueError("expected matrix")
    if b.ndim != 1:
        raise ValueError("expected vector")
    m, n = A.shape
    if b.shape[0] != m:
        raise ValueError("incompatible dimensions")
    if max_iter is None:
        max_iter = 3 * n

    x = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    w = A.T @ b
    it = 0
    while not passive.all():
        w_zero = np.where(passive, -np.inf, w)
        j = int(np.argmax(w_zero))
        if w_zero[j] <= tol:
            break
        if it >= max_iter:
            raise NNLSConvergenceError(f"no convergence after {max_iter} iterations")
        it += 1
        passive[j] = True

        first = True
        stalled = False
        while True:
            idx = np.flatnonzero(passive)
            z = np.zeros(n)
            z[idx] = np.linalg.lstsq(A[:, idx], b, rcond=None)[0]
            if np.all(z[idx] > 0):
                x = z
                break
            if first and z[j] <= 0:
                # rounding made the entering variable useless; treat as converged
                passive[j] = False
                stalled = True
                break
            first = False
            neg = idx[z[idx] <= 0]
            alpha = np.min(x[neg] / (x[neg] - z[neg]))
            x = x + alpha * (z - x)
            passive &= x > 0
            x[~passive] = 0.0
        if stalled:
            break
        w = A.T @ (b - A @ x)

    rnorm = float(np.linalg.norm(A @ x - b))
    return x, rnorm
