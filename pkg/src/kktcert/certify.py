"""Hypothesis checks and global-optimality certificates.

For ``min f(x) s.t. g_j(x) <= 0`` with convex ``f`` and a convex feasible set
K whose defining functions ``g_j`` may be nonconvex, a KKT point is a global
minimizer as soon as

* some point is strictly feasible (Slater),
* no ``grad g_j`` vanishes where ``g_j`` is active on K (nondegeneracy), and
* every active constraint gradient supports K:
  ``<grad g_j(x), y - x> <= 0`` for boundary points x and all y in K.

The last two conditions quantify over continua, so they are checked by
seeded sampling.  A passing run therefore yields the status
``CERTIFIED_MODULO_SAMPLING``: strong evidence, not a proof.  A failing
boundary-convexity check, on the other hand, comes with a concrete witness
point outside K and is a genuine refutation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .expr import ExprDomainError, evaluate, gradient
from .geometry import (
    FeasibleSampler,
    active_set,
    check_feasibility,
    constraint_values,
    random_direction,
    ray_exit,
    spawn,
)
from .linalg import jacobi_eigenvalues, nnls
from .model import (
    ConstraintNondegeneracy,
    ConvexityReport,
    ConvexityViolation,
    FritzJohnCertificate,
    GlobalOptimalityCertificate,
    KktPoint,
    LagrangianProbeResult,
    NondegeneracyFailure,
    NondegeneracyReport,
    NonnegViolation,
    Problem,
    SlaterCertificate,
    SlaterFailure,
    Tolerances,
    UnconfirmedViolation,
    Vector,
    as_vector,
    provenance,
)

# sub-stream ids under the user seed
_SLATER, _NONDEGEN, _FALSIFY, _PROBE = 0, 1, 2, 3

WITNESS_MAX_K = 40
HESSIAN_STEP = 1e-4
CONVEXITY_EIG_TOL = 1e-6


def _dot(a: Sequence[float], b: Sequence[float]) -> float:
    return math.fsum(x * y for x, y in zip(a, b))


def _norm(a: Sequence[float]) -> float:
    return math.sqrt(math.fsum(x * x for x in a))


# --------------------------------------------------------------------------
# Slater
# --------------------------------------------------------------------------


def _smoothed_max(p: Problem, x: Vector, T: float) -> tuple[float, np.ndarray]:
    """``T log sum exp(g_j / T)`` and its gradient; raises on domain errors."""
    grads = [gradient(g, x) for g in p.constraints]
    vals = np.array([gv.value for gv in grads])
    top = vals.max()
    w = np.exp((vals - top) / T)
    s = w.sum()
    value = top + T * math.log(s)
    grad = (w / s) @ np.array([gv.grad for gv in grads])
    return value, grad


def _smoothed_max_value(p: Problem, x: Vector, T: float) -> float:
    vals = np.array(constraint_values(p, x))
    top = vals.max()
    return top + T * math.log(np.exp((vals - top) / T).sum())


def _safe_phi(p: Problem, x: Vector) -> float:
    try:
        return max(constraint_values(p, x))
    except ExprDomainError:
        return math.inf


def _descend_smoothed_max(p: Problem, x: Vector, T: float, iters: int) -> Vector:
    lo, hi = np.array(p.lower), np.array(p.upper)
    for _ in range(iters):
        try:
            val, grad = _smoothed_max(p, x, T)
        except ExprDomainError:
            return x
        gnorm2 = float(grad @ grad)
        if gnorm2 <= 1e-24:
            return x
        step = 1.0
        for _ in range(60):
            trial = as_vector(np.clip(np.asarray(x) - step * grad, lo, hi))
            try:
                tval = _smoothed_max_value(p, trial, T)
            except ExprDomainError:
                tval = math.inf
            if tval <= val - 1e-4 * step * gnorm2 or (tval < val and trial != x):
                break
            step *= 0.5
        else:
            return x
        if trial == x:
            return x
        x = trial
    return x


def slater_search(
    p: Problem,
    seed: int,
    tol: Tolerances = Tolerances(),
    starts: int = 4,
    temperatures: Sequence[float] = (1.0, 0.1, 0.01, 1e-3),
    iters_per_temperature: int = 60,
    rejection_draws: int = 10_000,
) -> Union[SlaterCertificate, SlaterFailure]:
    """Look for a strictly feasible point by minimizing ``max_j g_j`` over the box.

    Each start (the box center, then seeded uniform draws) runs projected
    gradient descent with backtracking on a log-sum-exp smoothing of the max,
    lowering the temperature in stages.  The best point over all starts is
    kept; if none is strictly feasible, rejection sampling is tried before
    giving up.  Failure is returned as a :class:`SlaterFailure`, not raised.
    """
    rng = spawn(seed, _SLATER)
    lo, hi = np.array(p.lower), np.array(p.upper)
    candidates = [p.box_center] + [as_vector(lo + (hi - lo) * rng.random(p.n)) for _ in range(starts - 1)]

    best_x, best_phi = candidates[0], _safe_phi(p, candidates[0])
    for x in candidates:
        if _safe_phi(p, x) == math.inf:
            continue
        for T in temperatures:
            x = _descend_smoothed_max(p, x, T, iters_per_temperature)
        phi = _safe_phi(p, x)
        if phi < best_phi:
            best_x, best_phi = x, phi

    if not best_phi < 0.0:
        sampler = FeasibleSampler(p, rng, tol)
        for _ in range(16):
            y = sampler.draw(cap=max(1, rejection_draws // 16))
            if y is None:
                break
            phi = _safe_phi(p, y)
            if phi < best_phi:
                best_x, best_phi = y, phi
            if best_phi < 0.0:
                break

    if best_phi < 0.0:
        return SlaterCertificate(best_x, -best_phi)
    return SlaterFailure(best_x, best_phi, starts)


# --------------------------------------------------------------------------
# Boundary sampling shared by the nondegeneracy and convexity checks
# --------------------------------------------------------------------------


def _ray_exit(p: Problem, x0: Vector, rng: np.random.Generator, tol: Tolerances):
    """Shoot one random ray from ``x0``; return (boundary point, active indices) or None."""
    pt = ray_exit(p, x0, random_direction(rng, p.n), tol)
    if pt is None:
        return None
    return pt, sorted(active_set(p, pt, tol).indices)


# --------------------------------------------------------------------------
# Nondegeneracy
# --------------------------------------------------------------------------


def nondegeneracy_check(
    p: Problem,
    slater: Union[SlaterCertificate, SlaterFailure],
    samples_per_constraint: int = 200,
    seed: int = 42,
    tol: Tolerances = Tolerances(),
    extra_points: Sequence[Sequence[float]] = (),
    max_rays: Optional[int] = None,
) -> NondegeneracyReport:
    """Sample active boundary points of each constraint and test ``|grad g_j| >= eps_grad``.

    With a Slater point, boundary points come from random rays shot out of
    it.  Without one (the set may have empty interior) only the best point of
    the failed Slater search and any ``extra_points`` can be examined.
    """
    points: dict[int, list[Vector]] = {j: [] for j in range(1, p.m + 1)}

    def add(pt: Vector, js) -> None:
        for j in js:
            if len(points[j]) < samples_per_constraint or pt in extra:
                points[j].append(pt)

    extra = [as_vector(e) for e in extra_points]
    if isinstance(slater, SlaterCertificate):
        rng = spawn(seed, _NONDEGEN)
        budget = max_rays if max_rays is not None else max(200, 4 * samples_per_constraint * p.m)
        for ray in range(budget):
            hit = _ray_exit(p, slater.x0, rng, tol)
            if hit is not None:
                add(*hit)
            if ray >= 199:
                # constraints never reached in 200 rays are treated as unreachable
                wanted = [j for j in points if points[j]]
                if all(len(points[j]) >= samples_per_constraint for j in wanted):
                    break
    else:
        extra.insert(0, slater.best_point)

    for pt in extra:
        check = check_feasibility(p, pt, tol)
        if check.feasible:
            add(pt, [j for j, v in enumerate(check.values, 1) if abs(v) <= tol.eps_active])

    per = []
    for j in range(1, p.m + 1):
        norms = [(pt, _norm(gradient(p.constraints[j - 1], pt).grad)) for pt in points[j]]
        failures = tuple(NondegeneracyFailure(pt, nrm) for pt, nrm in norms if nrm < tol.eps_grad)
        per.append(
            ConstraintNondegeneracy(
                j, len(norms), min((nrm for _, nrm in norms), default=None), failures
            )
        )
    return NondegeneracyReport(tuple(per))


# --------------------------------------------------------------------------
# Boundary convexity falsifier
# --------------------------------------------------------------------------


def find_witness(p: Problem, j: int, x: Vector, y: Vector, tol: Tolerances):
    """First ``t = 2^-k`` (k = 1..40) with ``g_j(x + t(y - x)) > eps_feas``, or None."""
    g = p.constraints[j - 1]
    for k in range(1, WITNESS_MAX_K + 1):
        t = 2.0**-k
        z = tuple(xi + t * (yi - xi) for xi, yi in zip(x, y))
        try:
            gz = evaluate(g, z)
        except ExprDomainError:
            continue
        if gz > tol.eps_feas:
            return t, z, gz
    return None


def check_pair(
    p: Problem, j: int, x: Sequence[float], y: Sequence[float], tol: Tolerances = Tolerances()
) -> Union[ConvexityViolation, UnconfirmedViolation, None]:
    """Test ``<grad g_j(x), y - x> <= eps_kkt`` for one boundary point x and one y in K.

    Returns None when the inequality holds, otherwise the violation, confirmed
    or not depending on whether a witness point was found.
    """
    x, y = as_vector(x), as_vector(y)
    diff = tuple(yi - xi for xi, yi in zip(x, y))
    inner = _dot(gradient(p.constraints[j - 1], x).grad, diff)
    if inner <= tol.eps_kkt:
        return None
    w = find_witness(p, j, x, y, tol)
    if w is None:
        return UnconfirmedViolation(j, x, y, inner)
    t, z, gz = w
    return ConvexityViolation(j, x, y, inner, t, z, gz)


def convexity_falsify(
    p: Problem,
    slater: SlaterCertificate,
    pairs: int = 1000,
    seed: int = 42,
    tol: Tolerances = Tolerances(),
    rays_per_pair: int = 16,
) -> ConvexityReport:
    """Search for pairs (x on the boundary, y in K) with ``<grad g_j(x), y - x> > 0``.

    A convex K admits no such pair.  Each candidate is confirmed by scanning
    ``t = 1/2, 1/4, ...`` for a point ``x + t(y - x)`` of the segment that
    violates ``g_j``; this point lies on a segment between two points of K
    and outside K, so it refutes convexity outright.  Candidates without such
    a witness are reported as unconfirmed and do not count.
    """
    if not isinstance(slater, SlaterCertificate):
        raise ValueError("convexity_falsify needs a Slater certificate")
    ray_rng = spawn(seed, _FALSIFY, 0)
    sampler = FeasibleSampler(p, spawn(seed, _FALSIFY, 1), tol)

    found: list[tuple[int, int, ConvexityViolation]] = []
    unconfirmed: list[tuple[int, int, UnconfirmedViolation]] = []
    tested = 0
    for i in range(pairs):
        hit = None
        for _ in range(rays_per_pair):
            hit = _ray_exit(p, slater.x0, ray_rng, tol)
            if hit is not None:
                break
        if hit is None:
            continue
        x, js = hit
        y = sampler.draw()
        if y is None:
            break
        for j in js:
            tested += 1
            v = check_pair(p, j, x, y, tol)
            if isinstance(v, ConvexityViolation):
                found.append((j, i, v))
            elif v is not None:
                unconfirmed.append((j, i, v))

    found.sort(key=lambda r: r[:2])
    unconfirmed.sort(key=lambda r: r[:2])
    return ConvexityReport(tuple(v for *_, v in found), tuple(v for *_, v in unconfirmed), tested)


# --------------------------------------------------------------------------
# KKT data
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class KktResidual:
    stationarity: float
    complementarity: float
    feasible: bool
    dual_feasible: bool


def kkt_residual(
    p: Problem, x: Sequence[float], lam: Sequence[float], tol: Tolerances = Tolerances()
) -> KktResidual:
    """Stationarity ``||grad f + sum lam_j grad g_j||`` and complementarity ``max |lam_j g_j|``."""
    x = as_vector(x)
    if len(x) != p.n or len(lam) != p.m:
        raise ValueError("point or multiplier vector has the wrong length")
    r = np.array(gradient(p.objective, x).grad)
    comp = 0.0
    for lj, g in zip(lam, p.constraints):
        gv = gradient(g, x)
        r = r + lj * np.array(gv.grad)
        comp = max(comp, abs(lj * gv.value))
    return KktResidual(
        float(np.linalg.norm(r)),
        comp,
        check_feasibility(p, x, tol).feasible,
        all(lj >= 0 for lj in lam),
    )


def recover_multipliers(p: Problem, x: Sequence[float], tol: Tolerances = Tolerances()) -> KktPoint:
    """Least-squares multipliers on the active set, constrained to be nonnegative."""
    x = as_vector(x)
    active = sorted(active_set(p, x, tol).indices)
    lam = [0.0] * p.m
    if active:
        A = np.column_stack([gradient(p.constraints[j - 1], x).grad for j in active])
        b = -np.array(gradient(p.objective, x).grad)
        sol, _ = nnls(A, b)
        for j, v in zip(active, sol):
            lam[j - 1] = float(v)
    res = kkt_residual(p, x, lam, tol)
    return KktPoint(x, tuple(lam), res.stationarity, res.complementarity)


def fritz_john_probe(p: Problem, x: Sequence[float], tol: Tolerances = Tolerances()) -> FritzJohnCertificate:
    """Best Fritz-John multipliers ``(lambda0, lambda)`` on the unit simplex at ``x``.

    ``DEGENERATE_FJ`` means the gradients of the active constraints alone can
    cancel (``lambda0 ~ 0`` with zero residual), so the point may be optimal
    without being a KKT point.
    """
    x = as_vector(x)
    active = sorted(active_set(p, x, tol).indices)
    cols = [gradient(p.objective, x).grad] + [gradient(p.constraints[j - 1], x).grad for j in active]
    A = np.column_stack(cols)
    weight = 1e4 * max(1.0, float(np.abs(A).max()))
    # the weighted row pins lambda0 + sum(lambda) to 1
    A_aug = np.vstack([A, weight * np.ones(A.shape[1])])
    b_aug = np.zeros(A_aug.shape[0])
    b_aug[-1] = weight
    sol, _ = nnls(A_aug, b_aug)
    total = sol.sum()
    if total > 0:
        sol = sol / total
    else:
        sol = np.zeros_like(sol)
        sol[0] = 1.0
    lam = [0.0] * p.m
    for j, v in zip(active, sol[1:]):
        lam[j - 1] = float(v)
    residual = float(np.linalg.norm(A @ sol))
    lambda0 = float(sol[0])
    if residual > tol.eps_kkt:
        status = "NOT_FJ_POINT"
    elif lambda0 <= tol.eps_kkt:
        status = "DEGENERATE_FJ"
    else:
        status = "KKT"
    return FritzJohnCertificate(x, lambda0, tuple(lam), residual, status)


# --------------------------------------------------------------------------
# Global certificate
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CertifyConfig:
    seed: int = 42
    pairs: int = 1000  # convexity falsifier pairs
    boundary_samples: int = 200  # nondegeneracy samples per constraint


def certify_global(
    p: Problem,
    x: Sequence[float],
    config: CertifyConfig = CertifyConfig(),
    tol: Tolerances = Tolerances(),
) -> GlobalOptimalityCertificate:
    """Run every check and decide whether ``x`` is certified as a global minimizer.

    Status precedence: NO_SLATER, REFUTED_CONVEXITY, DEGENERATE_FJ (a
    nondegeneracy failure or a degenerate Fritz-John point at ``x``),
    KKT_RESIDUAL_TOO_LARGE (including infeasible ``x``), and finally
    CERTIFIED_MODULO_SAMPLING.
    """
    x = as_vector(x)
    prov = provenance(config.seed, config.pairs, tol)
    try:
        fx = evaluate(p.objective, x)
    except ExprDomainError:
        fx = None

    slater = slater_search(p, config.seed, tol)
    if isinstance(slater, SlaterFailure):
        return GlobalOptimalityCertificate(
            "NO_SLATER", x, fx, None, None, slater, None, (), (), None, prov
        )

    feasible = check_feasibility(p, x, tol).feasible
    nondeg = nondegeneracy_check(
        p, slater, config.boundary_samples, config.seed, tol, extra_points=[x] if feasible else []
    )
    report = convexity_falsify(p, slater, config.pairs, config.seed, tol)

    kkt = fj = None
    if feasible and fx is not None:
        try:
            kkt = recover_multipliers(p, x, tol)
            fj = fritz_john_probe(p, x, tol)
        except ExprDomainError:
            kkt = fj = None

    if report.violations:
        status = "REFUTED_CONVEXITY"
    elif not nondeg.ok or (fj is not None and fj.status == "DEGENERATE_FJ"):
        status = "DEGENERATE_FJ"
    elif (
        kkt is None
        or kkt.stationarity_residual > tol.eps_kkt
        or kkt.complementarity_residual > tol.eps_kkt
    ):
        status = "KKT_RESIDUAL_TOO_LARGE"
    else:
        status = "CERTIFIED_MODULO_SAMPLING"
    return GlobalOptimalityCertificate(
        status, x, fx, kkt, slater, None, nondeg, report.violations, report.unconfirmed, fj, prov
    )


# --------------------------------------------------------------------------
# Lagrangian probe
# --------------------------------------------------------------------------


def lagrangian_value(p: Problem, lam: Sequence[float], fstar: float, x: Sequence[float]) -> float:
    """``f(x) - fstar + sum_j lam_j g_j(x)``."""
    return evaluate(p.objective, x) - fstar + math.fsum(
        lj * evaluate(g, x) for lj, g in zip(lam, p.constraints) if lj != 0.0
    )


def _lagrangian_gradient(p: Problem, lam: Sequence[float], x: Vector) -> np.ndarray:
    r = np.array(gradient(p.objective, x).grad)
    for lj, g in zip(lam, p.constraints):
        if lj != 0.0:
            r = r + lj * np.array(gradient(g, x).grad)
    return r


def lagrangian_hessian(p: Problem, lam: Sequence[float], x: Sequence[float], h: float = HESSIAN_STEP) -> np.ndarray:
    """Symmetrized central differences of the exact Lagrangian gradient."""
    x = np.asarray(x, dtype=float)
    H = np.empty((p.n, p.n))
    for i in range(p.n):
        e = np.zeros(p.n)
        e[i] = h
        H[i] = (_lagrangian_gradient(p, lam, as_vector(x + e)) - _lagrangian_gradient(p, lam, as_vector(x - e))) / (2 * h)
    return 0.5 * (H + H.T)


def lagrangian_probe(
    p: Problem,
    kkt: KktPoint,
    fstar: float,
    samples: int = 1000,
    seed: int = 42,
    tol: Tolerances = Tolerances(),
) -> LagrangianProbeResult:
    """Sample ``L(x) = f(x) - fstar + sum lam_j g_j(x)`` over the box.

    With convex ``g_j`` this Lagrangian is convex and nonnegative everywhere;
    for other representations of the same set it need not be.  Records
    points where ``L < -eps_kkt`` and the smallest Hessian eigenvalue seen.
    """
    if kkt.stationarity_residual > tol.eps_kkt or kkt.complementarity_residual > tol.eps_kkt:
        raise ValueError("lagrangian_probe needs a KKT point with residuals within eps_kkt")
    rng = spawn(seed, _PROBE)
    lo, hi = np.array(p.lower), np.array(p.upper)
    lam = kkt.lambda_
    violations = []
    min_eig = math.inf
    evaluated = skipped = 0
    for _ in range(samples):
        x = as_vector(lo + (hi - lo) * rng.random(p.n))
        try:
            value = lagrangian_value(p, lam, fstar, x)
            H = lagrangian_hessian(p, lam, x)
        except ExprDomainError:
            skipped += 1
            continue
        evaluated += 1
        if value < -tol.eps_kkt:
            violations.append(NonnegViolation(x, value))
        min_eig = min(min_eig, float(jacobi_eigenvalues(H)[0]))
    if not evaluated:
        raise ValueError("no sample point could be evaluated")
    return LagrangianProbeResult(
        tuple(lam),
        float(fstar),
        min_eig,
        tuple(violations),
        min_eig >= -CONVEXITY_EIG_TOL,
        evaluated,
        skipped,
    )


# --------------------------------------------------------------------------
# Re-verification of stored evidence
# --------------------------------------------------------------------------


def recheck_slater(p: Problem, cert: SlaterCertificate) -> float:
    """Recomputed margin ``-max_j g_j(x0)``."""
    return -max(constraint_values(p, cert.x0))


def recheck_violation(p: Problem, v: ConvexityViolation) -> tuple[float, Vector, float]:
    """Recomputed (inner product, witness point, g_j at the witness)."""
    diff = tuple(yi - xi for xi, yi in zip(v.x, v.y))
    inner = _dot(gradient(p.constraints[v.j - 1], v.x).grad, diff)
    z = tuple(xi + v.witness_t * di for xi, di in zip(v.x, diff))
    return inner, z, evaluate(p.constraints[v.j - 1], z)


def recheck_kkt(p: Problem, k: KktPoint) -> tuple[float, float]:
    res = kkt_residual(p, k.x, k.lambda_)
    return res.stationarity, res.complementarity


def recheck_fritz_john(p: Problem, c: FritzJohnCertificate) -> float:
    r = c.lambda0 * np.array(gradient(p.objective, c.x).grad)
    for lj, g in zip(c.lambda_, p.constraints):
        if lj != 0.0:
            r = r + lj * np.array(gradient(g, c.x).grad)
    return float(np.linalg.norm(r))
