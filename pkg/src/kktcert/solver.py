"""Log-barrier gradient descent for KKT points, and a brute-force grid oracle."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import IO, Optional, Sequence

import numpy as np

from .certify import recover_multipliers
from .expr import ExprDomainError, evaluate, evaluate_many, gradient, rounding_error_bound, scalar_function
from .geometry import InfeasiblePointError, is_feasible
from .model import KktPoint, Problem, SlaterCertificate, Tolerances, Vector, as_vector, register, to_jsonable

MAX_INNER_ITERATIONS = 10_000
ARMIJO_SLOPE = 1e-4
MAX_HALVINGS = 200
NOISE_SAFETY = 10.0
VALUE_SLACK = 16.0  # ulps of B tolerated by the Armijo test


@register
@dataclass(frozen=True)
class BarrierStage:
    mu: float
    inner_iterations: int
    gradient_norm: float
    barrier_start: float
    barrier_end: float
    max_constraint: float  # largest g_j seen over accepted iterates; < 0 throughout
    multiplier_estimates: tuple[float, ...]  # mu / -g_j at the stage end, diagnostics only
    converged: bool  # gradient threshold reached
    stalled: bool  # stopped at the floating-point floor instead


@register
@dataclass(frozen=True)
class SolveResult:
    x: Vector
    fstar: float
    kkt: Optional[KktPoint]
    stages: tuple[BarrierStage, ...]
    converged: bool


@register
@dataclass(frozen=True)
class OracleResult:
    x: Vector
    value: float
    grid_resolution: float
    refinement_rounds: int


class _Barrier:
    """``B(x) = f(x) - mu * sum_j log(-g_j(x))``; +inf off the strict interior."""

    def __init__(self, p: Problem):
        self.p = p
        self.f = scalar_function(p.objective)
        self.gs = [scalar_function(g) for g in p.constraints]

    def constraint_values(self, x: Vector) -> Optional[list[float]]:
        try:
            vals = [g(x) for g in self.gs]
        except ExprDomainError:
            return None
        return vals if all(v < 0.0 for v in vals) else None

    def value(self, x: Vector, mu: float) -> float:
        vals = self.constraint_values(x)
        if vals is None:
            return math.inf
        try:
            fx = self.f(x)
        except ExprDomainError:
            return math.inf
        return fx - mu * math.fsum(math.log(-v) for v in vals)

    def gradient(self, x: Vector, mu: float) -> tuple[np.ndarray, float]:
        """``grad B`` and the size of its rounding noise.

        An absolute error ``d`` in ``g_j`` perturbs ``mu / -g_j`` by about
        ``mu * d / g_j**2``, which swamps everything once ``|g_j| ~ mu``.
        """
        grad = np.array(gradient(self.p.objective, x).grad)
        noise = 0.0
        for g in self.p.constraints:
            gv = gradient(g, x)
            gg = np.array(gv.grad)
            grad += (mu / -gv.value) * gg
            noise += mu * float(np.linalg.norm(gg)) * rounding_error_bound(g, x) / gv.value**2
        return grad, NOISE_SAFETY * noise


def _run_stage(barrier: _Barrier, x: Vector, mu: float, threshold: float, max_inner: int):
    value = start = barrier.value(x, mu)
    max_g = max(barrier.constraint_values(x))
    grad, noise = barrier.gradient(x, mu)
    gnorm = float(np.linalg.norm(grad))
    stalled = False
    prev = None
    it = 0
    while gnorm > threshold and it < max_inner:
        if gnorm <= noise:
            stalled = True
            break
        step = 1.0
        if prev is not None:
            # Barzilai-Borwein trial step; Armijo backtracking still guards it
            s_ = np.asarray(x) - prev[0]
            y_ = grad - prev[1]
            sy = float(s_ @ y_)
            if sy > 0.0:
                step = min(float(s_ @ s_) / sy, 1e12)
        prev = (np.asarray(x), grad)
        slope = ARMIJO_SLOPE * gnorm * gnorm
        slack = VALUE_SLACK * math.ulp(max(abs(value), 1.0))
        xa = np.asarray(x)
        for _ in range(MAX_HALVINGS):
            trial = as_vector(xa - step * grad)
            tval = barrier.value(trial, mu)
            if tval <= value - step * slope + slack:
                break
            step *= 0.5
        else:
            stalled = True
            break
        if trial == x:
            stalled = True
            break
        x, value = trial, tval
        max_g = max(max_g, max(barrier.constraint_values(x)))
        grad, noise = barrier.gradient(x, mu)
        gnorm = float(np.linalg.norm(grad))
        it += 1
    vals = barrier.constraint_values(x)
    stage = BarrierStage(
        mu,
        it,
        gnorm,
        start,
        value,
        max_g,
        tuple(mu / -v for v in vals),
        gnorm <= threshold,
        stalled,
    )
    return x, stage


def barrier_solve(
    p: Problem,
    slater: SlaterCertificate,
    schedule: tuple[float, float, int] = (1.0, 0.5, 40),
    tol: Tolerances = Tolerances(),
    max_inner: int = MAX_INNER_ITERATIONS,
    trace: Optional[IO[str]] = None,
) -> SolveResult:
    """Minimize ``f`` over K along the log-barrier path.

    For ``mu = mu0, mu0*factor, ...`` the barrier function is minimized by
    gradient descent with Armijo backtracking from the previous stage's
    point, starting at the Slater point.  Trial steps that leave the strict
    interior are rejected (their barrier value is +inf), so every iterate is
    strictly feasible.  A stage ends once ``||grad B|| <= max(eps_kkt, mu)``,
    or as ``stalled`` once the gradient is no larger than its own rounding
    noise (for small ``mu`` the active ``g_j`` are within a few ulps of zero)
    or no step decreases B.  Trial steps start from the Barzilai-Borwein
    length, falling back to 1, and the Armijo test tolerates a few ulps of
    rounding in B, without which tangential progress along an active
    constraint stops once the required decrease drops below B's resolution.
    Stages that hit ``max_inner`` make the solve non-converged.

    The multipliers reported in ``kkt`` come from nonnegative least squares
    at the final point; the barrier estimates ``mu / -g_j`` are kept in the
    stage trace for diagnostics only.  When ``trace`` is given, one JSON line
    per stage is written to it.
    """
    if not isinstance(slater, SlaterCertificate):
        raise ValueError("barrier_solve needs a Slater certificate (a strictly feasible start)")
    mu0, factor, n_stages = schedule
    if not (mu0 > 0 and 0 < factor < 1 and n_stages >= 1):
        raise ValueError(f"invalid schedule {schedule!r}")

    barrier = _Barrier(p)
    x = as_vector(slater.x0)
    if barrier.constraint_values(x) is None:
        raise ValueError(f"start point {x} is not strictly feasible")

    stages = []
    mu = float(mu0)
    for _ in range(int(n_stages)):
        x, stage = _run_stage(barrier, x, mu, max(tol.eps_kkt, mu), max_inner)
        stages.append(stage)
        if trace is not None:
            trace.write(json.dumps(to_jsonable(stage), sort_keys=False) + "\n")
        mu *= factor

    fstar = evaluate(p.objective, x)
    try:
        kkt = recover_multipliers(p, x, tol)
    except InfeasiblePointError:
        kkt = None
    converged = (
        all(s.converged or s.stalled for s in stages)
        and kkt is not None
        and kkt.stationarity_residual <= tol.eps_kkt
        and kkt.complementarity_residual <= tol.eps_kkt
        and is_feasible(p, x, tol)
    )
    return SolveResult(x, fstar, kkt, tuple(stages), converged)


# --------------------------------------------------------------------------
# Oracle
# --------------------------------------------------------------------------


CROSSING_BISECTIONS = 60


def _max_constraint(p: Problem, X: np.ndarray) -> np.ndarray:
    """Largest g_j at each row of X; +inf where some g_j is undefined."""
    phi = np.full(len(X), -np.inf)
    for g in p.constraints:
        with np.errstate(invalid="ignore"):
            phi = np.maximum(phi, evaluate_many(g, X))
    return np.where(np.isnan(phi), np.inf, phi)


def _grid_crossings(p: Problem, X: np.ndarray, ok: np.ndarray, N: int, tol: Tolerances) -> np.ndarray:
    """Points where grid lines leave K, bisected from the feasible end.

    Every pair of axis-neighbours with one feasible and one infeasible grid
    point contributes the feasible end of its bracketing interval after
    ``CROSSING_BISECTIONS`` halvings.
    """
    shape = (N,) * p.n
    okg = ok.reshape(shape)
    Xg = X.reshape(shape + (p.n,))
    inside, outside = [], []
    for axis in range(p.n):
        a = [slice(None)] * p.n
        b = [slice(None)] * p.n
        a[axis], b[axis] = slice(0, -1), slice(1, None)
        ka, kb = okg[tuple(a)], okg[tuple(b)]
        xa, xb = Xg[tuple(a)], Xg[tuple(b)]
        fwd, bwd = ka & ~kb, kb & ~ka
        inside += [xa[fwd], xb[bwd]]
        outside += [xb[fwd], xa[bwd]]
    lo, hi = np.concatenate(inside), np.concatenate(outside)
    for _ in range(CROSSING_BISECTIONS):
        mid = 0.5 * (lo + hi)
        good = _max_constraint(p, mid) <= tol.eps_feas
        lo = np.where(good[:, None], mid, lo)
        hi = np.where(good[:, None], hi, mid)
    return lo


def brute_force_oracle(
    p: Problem,
    grid_points_per_axis: int = 201,
    refinement_rounds: int = 6,
    tol: Tolerances = Tolerances(),
    neighborhood_cells: float = 1.5,
) -> OracleResult:
    """Best feasible point of a uniform grid, refined by zooming in.

    Each round evaluates ``f`` on the feasible points of a uniform grid over
    the current box, together with the points where the grid lines cross
    the boundary of K (found by bisection).  The next box spans
    ``neighborhood_cells`` cells on either side of the best candidate,
    clipped to the original box.  Grid points alone sit a random distance
    inside a curved boundary, so along the boundary their values only locate
    the minimizer to about the square root of the cell size; the crossings
    lie on the boundary itself and resolve it to within a cell.  Ties go to
    the lowest candidate index, so the result is deterministic.
    """
    if p.n > 4:
        raise ValueError(f"grid oracle is limited to n <= 4 (got n = {p.n})")
    if grid_points_per_axis < 2 or refinement_rounds < 1:
        raise ValueError("need at least 2 grid points per axis and 1 round")
    N = int(grid_points_per_axis)
    lo0, hi0 = np.array(p.lower), np.array(p.upper)
    lo, hi = lo0.copy(), hi0.copy()
    best_x, best_val = None, math.inf
    h = hi - lo
    for _ in range(refinement_rounds):
        axes = [np.linspace(a, b, N) for a, b in zip(lo, hi)]
        h = (hi - lo) / (N - 1)
        X = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, p.n)
        ok = _max_constraint(p, X) <= tol.eps_feas
        C = np.concatenate([X[ok], _grid_crossings(p, X, ok, N, tol)])
        with np.errstate(invalid="ignore"):
            F = evaluate_many(p.objective, C)
        F = np.where(np.isnan(F), np.inf, F)
        # confirm candidates with the scalar evaluator, cheapest first
        for k in np.argsort(F, kind="stable"):
            if not np.isfinite(F[k]):
                break
            x = as_vector(C[k])
            if is_feasible(p, x, tol):
                try:
                    val = evaluate(p.objective, x)
                except ExprDomainError:
                    continue
                if val < best_val:
                    best_x, best_val = x, val
                break
        if best_x is None:
            raise ValueError(
                "no feasible grid point found; try a finer grid or check that the set is nonempty"
            )
        c = np.array(best_x)
        lo = np.maximum(lo0, c - neighborhood_cells * h)
        hi = np.minimum(hi0, c + neighborhood_cells * h)
    return OracleResult(best_x, best_val, float(np.max(h)), refinement_rounds)
