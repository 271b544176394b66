"""Feasible-set queries: membership, active sets, boundary and interior sampling.

All randomness flows through :func:`make_rng`, a PCG64 generator built from a
``SeedSequence``.  Independent streams for sub-tasks are obtained with
:func:`spawn`, so results depend only on the seed, not on call order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .expr import ExprDomainError, evaluate, evaluate_many, scalar_function
from .model import Problem, Tolerances, Vector, as_vector

MAX_REJECTION_DRAWS = 100_000
SCAN_STEPS = 256
MAX_BISECTIONS = 200


class InfeasiblePointError(ValueError):
    pass


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(seed))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def spawn(seed: int, *path: int) -> np.random.Generator:
    """Generator for the sub-stream ``path`` of ``seed`` (e.g. ``spawn(42, 1, j)``)."""
    return make_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in path)))


@dataclass(frozen=True)
class Feasibility:
    feasible: bool
    values: Optional[Vector]  # g_1..g_m, None on a domain violation
    domain_error: Optional[str] = None


def constraint_values(p: Problem, x: Sequence[float]) -> Vector:
    """``(g_1(x), ..., g_m(x))``; raises :class:`ExprDomainError`."""
    return tuple(evaluate(g, x) for g in p.constraints)


def check_feasibility(p: Problem, x: Sequence[float], tol: Tolerances) -> Feasibility:
    if len(x) != p.n:
        raise ValueError(f"point has length {len(x)}, expected {p.n}")
    try:
        values = constraint_values(p, x)
    except ExprDomainError as exc:
        return Feasibility(False, None, str(exc))
    return Feasibility(all(v <= tol.eps_feas for v in values), values)


def is_feasible(p: Problem, x: Sequence[float], tol: Tolerances = Tolerances()) -> bool:
    """``g_j(x) <= eps_feas`` for every j; points outside an expression's domain are infeasible."""
    return check_feasibility(p, x, tol).feasible


def is_strictly_feasible(p: Problem, x: Sequence[float]) -> bool:
    try:
        return all(v < 0.0 for v in constraint_values(p, x))
    except ExprDomainError:
        return False


@dataclass(frozen=True)
class ActiveSet:
    point: Vector
    indices: frozenset[int]  # 1-based


def active_set(p: Problem, x: Sequence[float], tol: Tolerances = Tolerances()) -> ActiveSet:
    """Constraints with ``|g_j(x)| <= eps_active`` at a feasible ``x``."""
    check = check_feasibility(p, x, tol)
    if not check.feasible:
        raise InfeasiblePointError(f"point {tuple(x)} is not feasible")
    idx = frozenset(j for j, v in enumerate(check.values, 1) if abs(v) <= tol.eps_active)
    return ActiveSet(as_vector(x), idx)


def box_exit(p: Problem, x: Sequence[float], d: Sequence[float]) -> float:
    """Largest ``t >= 0`` with ``x + t d`` inside the box (0 if already outside)."""
    t = math.inf
    for xi, di, (lo, hi) in zip(x, d, p.box):
        if di > 0:
            t = min(t, (hi - xi) / di)
        elif di < 0:
            t = min(t, (lo - xi) / di)
    return max(t, 0.0)


def _along(x: Vector, d: Vector, t: float) -> Vector:
    return tuple(xi + t * di for xi, di in zip(x, d))


def _phi_function(p: Problem):
    """``x -> max_j g_j(x)``, with points outside the domain mapped to +inf."""
    fns = [scalar_function(g) for g in p.constraints]

    def phi(x: Vector) -> float:
        try:
            return max(f(x) for f in fns)
        except ExprDomainError:
            return math.inf

    return phi


def ray_exit(
    p: Problem, interior: Sequence[float], direction: Sequence[float], tol: Tolerances = Tolerances()
) -> Optional[Vector]:
    """Last point of K on the ray ``interior + t*direction`` before it leaves K.

    The ray is scanned inside the box for the first step outside K (some
    ``g_j > 0`` or an expression undefined).  That bracket is shrunk on
    ``max_j g_j`` by the Illinois variant of regula falsi (bisection where
    ``max_j g_j`` is undefined) down to floating-point resolution and the
    feasible end is returned.  When the ray reaches the box edge without leaving K, the edge
    point is returned if some constraint is active there (bound constraints
    coincide with the box), and None otherwise.
    """
    x = as_vector(interior)
    d = as_vector(direction)
    if len(x) != p.n or len(d) != p.n:
        raise ValueError("interior point and direction must have length n")
    if not any(di != 0.0 for di in d):
        raise ValueError("direction must be nonzero")
    if not is_strictly_feasible(p, x):
        raise ValueError(f"ray start {x} is not strictly feasible")

    tmax = box_exit(p, x, d)
    if tmax <= 0.0:
        return None
    ts = tmax * np.arange(1, SCAN_STEPS + 1) / SCAN_STEPS
    pts = np.asarray(x) + ts[:, None] * np.asarray(d)
    G = np.column_stack([evaluate_many(g, pts) for g in p.constraints])
    bad = np.isnan(G).any(axis=1) | (G > 0.0).any(axis=1)
    if not bad.any():
        # K may share part of its boundary with the box (bound constraints)
        end = as_vector(np.clip(pts[-1], p.lower, p.upper))
        check = check_feasibility(p, end, tol)
        if check.feasible and any(abs(v) <= tol.eps_active for v in check.values):
            return end
        return None
    k = int(np.argmax(bad))
    _phi = _phi_function(p)
    lo = float(ts[k - 1]) if k > 0 else 0.0
    hi = float(ts[k])
    flo, fhi = _phi(_along(x, d, lo)), _phi(_along(x, d, hi))
    if not flo <= 0.0 < fhi:
        return None
    # Illinois regula falsi keeps the bracket; plain bisection when phi is +inf
    side = 0
    for _ in range(MAX_BISECTIONS):
        if flo == 0.0:
            break
        if math.isfinite(fhi):
            mid = lo + (hi - lo) * (-flo) / (fhi - flo)
        else:
            mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            mid = 0.5 * (lo + hi)
            if not lo < mid < hi:
                break
        fmid = _phi(_along(x, d, mid))
        if fmid > 0.0:
            hi, fhi = mid, fmid
            if side == 1:
                flo *= 0.5
            side = 1
        else:
            lo, flo = mid, fmid
            if side == -1 and math.isfinite(fhi):
                fhi *= 0.5
            side = -1
    point = _along(x, d, lo)
    return point if is_feasible(p, point, tol) else None


def sample_boundary_point(
    p: Problem,
    j: int,
    interior: Sequence[float],
    direction: Sequence[float],
    tol: Tolerances = Tolerances(),
) -> Optional[Vector]:
    """Point of K on the ray from ``interior`` where ``g_j`` is active.

    None if the ray stays in K up to the box, or leaves K through another
    constraint.
    """
    if not 1 <= j <= p.m:
        raise ValueError(f"constraint index {j} out of range 1..{p.m}")
    point = ray_exit(p, interior, direction, tol)
    if point is None or abs(evaluate(p.constraints[j - 1], point)) > tol.eps_active:
        return None
    return point


class FeasibleSampler:
    """Uniform rejection sampler over the box, drawing from one generator stream."""

    batch = 1024

    def __init__(self, p: Problem, rng: np.random.Generator, tol: Tolerances = Tolerances()):
        self.p = p
        self.rng = rng
        self.tol = tol
        self._buf = np.empty((0, p.n))
        self._ok = np.empty(0, dtype=bool)
        self._pos = 0
        self._lo = np.array(p.lower)
        self._width = np.array(p.upper) - self._lo

    def _refill(self) -> None:
        X = self._lo + self._width * self.rng.random((self.batch, self.p.n))
        ok = np.ones(self.batch, dtype=bool)
        for g in self.p.constraints:
            with np.errstate(invalid="ignore"):
                ok &= evaluate_many(g, X) <= self.tol.eps_feas
        self._buf, self._ok, self._pos = X, ok, 0

    def draw(self, cap: int = MAX_REJECTION_DRAWS) -> Optional[Vector]:
        for _ in range(cap):
            if self._pos >= len(self._buf):
                self._refill()
            i = self._pos
            self._pos += 1
            if self._ok[i]:
                x = as_vector(self._buf[i])
                if is_feasible(self.p, x, self.tol):
                    return x
        return None


def sample_feasible_point(p: Problem, seed: int, tol: Tolerances = Tolerances()) -> Optional[Vector]:
    """A uniformly drawn feasible point of the box, or None after 10^5 rejections."""
    return FeasibleSampler(p, make_rng(seed), tol).draw()


def random_direction(rng: np.random.Generator, n: int) -> Vector:
    while True:
        v = rng.standard_normal(n)
        norm = float(np.linalg.norm(v))
        if norm > 1e-12:
            return as_vector(v / norm)


# --------------------------------------------------------------------------
# Two descriptions of the hyperbolic set {x >= 0, x1 x2 >= a}
# --------------------------------------------------------------------------


def hyperbolic_member(x: Sequence[float], a: float = 1.0) -> bool:
    """``x1 >= 0 and x2 >= 0 and x1*x2 >= a`` (the nonconvex representation)."""
    x1, x2 = x
    return x1 >= 0.0 and x2 >= 0.0 and x1 * x2 >= a


def psd_member(x: Sequence[float], a: float = 1.0) -> bool:
    """``[[x1, sqrt(a)], [sqrt(a), x2]]`` is positive semidefinite.

    A symmetric 2x2 matrix is PSD iff both diagonal entries and the
    determinant are nonnegative.
    """
    x1, x2 = x
    r = math.sqrt(a)
    M = ((x1, r), (r, x2))
    det = M[0][0] * M[1][1] - M[0][1] * M[1][0]
    return M[0][0] >= 0.0 and M[1][1] >= 0.0 and det >= 0.0
