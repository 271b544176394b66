"""Independent reference computations used by the tests.

Nothing here calls into the package's numerical routines: gradients come
from finite differences, multipliers from dense grids, and random
expressions are built as text so the parser is exercised too.
"""

from __future__ import annotations

import math

import numpy as np


def central_difference(f, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def nnls_grid_1d(a, b, lo=0.0, hi=10.0, step=1e-4):
    """argmin over the grid lam in [lo, hi] of ||lam * a - b||."""
    lam = np.arange(lo, hi + step / 2, step)
    r = np.linalg.norm(lam[:, None] * np.asarray(a)[None, :] - np.asarray(b)[None, :], axis=1)
    k = int(np.argmin(r))
    return float(lam[k]), float(r[k])


def nnls_grid_2d(A, b, hi=10.0, step=1e-3):
    """Best objective ||A lam - b||^2 over the grid [0, hi]^2."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    lam = np.arange(0.0, hi + step / 2, step)
    best = math.inf
    for l1 in lam:
        r = l1 * A[:, 0][None, :] + lam[:, None] * A[:, 1][None, :] - b[None, :]
        best = min(best, float(np.min(np.sum(r * r, axis=1))))
    return best


def simplex_grid_fj(grad_f, active_grads, step=1e-3):
    """Best (lambda0, lambda1) on the 1-simplex for a single active constraint."""
    t = np.arange(0.0, 1.0 + step / 2, step)
    gf = np.asarray(grad_f, dtype=float)
    gg = np.asarray(active_grads[0], dtype=float)
    r = np.linalg.norm(t[:, None] * gf[None, :] + (1 - t)[:, None] * gg[None, :], axis=1)
    k = int(np.argmin(r))
    return float(t[k]), float(1 - t[k]), float(r[k])


# --------------------------------------------------------------------------
# Random expressions, written out as text
# --------------------------------------------------------------------------


def _coef(rng):
    return f"{rng.uniform(0.2, 2.0):.3f}"


def random_polynomial(rng, n, max_degree=4, terms=3):
    """Sum of monomials of total degree <= max_degree."""
    out = []
    for _ in range(terms):
        degree = int(rng.integers(1, max_degree + 1))
        factors = [_coef(rng)]
        remaining = degree
        while remaining > 0:
            i = int(rng.integers(1, n + 1))
            k = int(rng.integers(1, remaining + 1))
            factors.append(f"x{i}^{k}" if k > 1 else f"x{i}")
            remaining -= k
        out.append("*".join(factors))
    signs = [rng.choice(["+", "-"]) for _ in out[1:]]
    text = out[0]
    for s, t in zip(signs, out[1:]):
        text += f" {s} {t}"
    return text


def random_expression(rng, n):
    """A polynomial, optionally wrapped in exp, log, sqrt or a quotient (all defined on R^n)."""
    kind = int(rng.integers(0, 5))
    p = random_polynomial(rng, n)
    if kind == 0:
        return p
    if kind == 1:
        return f"exp(0.1*({p})) + x1"
    if kind == 2:
        return f"log(1 + ({p})^2) - x{n}"
    if kind == 3:
        return f"sqrt(2 + ({random_polynomial(rng, n, 2, 2)})^2) * x1"
    return f"({p}) / (1 + x1^2)"
