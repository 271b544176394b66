"""Small dense linear algebra: nonnegative least squares and symmetric eigenvalues."""

from __future__ import annotations

import numpy as np


def nnls(A, b, maxiter: int | None = None) -> tuple[np.ndarray, float]:
    """Solve ``min ||A x - b||`` subject to ``x >= 0``.

    Lawson-Hanson active-set method: grow a passive set by the column with the
    largest positive dual ``A^T (b - A x)``, solve the unconstrained least
    squares problem on it, and step back toward the previous iterate whenever
    that solve produces negative entries, moving those entries to the bound.

    Returns
    -------
    x : ndarray, shape (n,)
    rnorm : float
        Euclidean norm of the residual ``A x - b``.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2 or b.shape != (A.shape[0],):
        raise ValueError(f"incompatible shapes {A.shape} and {b.shape}")
    m, n = A.shape
    if maxiter is None:
        maxiter = 3 * n + 30
    x = np.zeros(n)
    if n == 0:
        return x, float(np.linalg.norm(b))

    passive = np.zeros(n, dtype=bool)
    tol = 10 * np.finfo(float).eps * max(m, n) * max(1.0, np.abs(A).max(initial=0.0)) * max(
        1.0, np.abs(b).max(initial=0.0)
    )

    for _ in range(maxiter):
        w = A.T @ (b - A @ x)
        candidates = np.where(~passive & (w > tol))[0]
        if candidates.size == 0:
            break
        passive[candidates[np.argmax(w[candidates])]] = True

        while True:
            idx = np.where(passive)[0]
            z = np.zeros(n)
            z[idx] = np.linalg.lstsq(A[:, idx], b, rcond=None)[0]
            if np.all(z[idx] > 0):
                x = z
                break
            # step from x toward z until the first passive entry hits zero
            neg = idx[z[idx] <= 0]
            alpha = np.min(x[neg] / (x[neg] - z[neg]))
            x = x + alpha * (z - x)
            passive &= x > tol
            x[~passive] = 0.0
            if not passive.any():
                break

    return x, float(np.linalg.norm(A @ x - b))


def jacobi_eigenvalues(S, tol: float = 1e-14, max_sweeps: int = 100) -> np.ndarray:
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending."""
    S = np.array(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError("matrix must be square")
    S = 0.5 * (S + S.T)
    n = S.shape[0]
    scale = max(np.abs(S).max(initial=0.0), 1e-300)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.triu(S, 1) ** 2))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if S[p, q] == 0.0:
                    continue
                theta = (S[q, q] - S[p, p]) / (2.0 * S[p, q])
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0)) if theta != 0 else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                R = np.eye(n)
                R[p, p] = R[q, q] = c
                R[p, q] = s
                R[q, p] = -s
                S = R.T @ S @ R
                S[p, q] = S[q, p] = 0.0
    return np.sort(np.diag(S))
