"""Log-barrier solver and the brute-force grid oracle."""

import io
import json
import math

import numpy as np
import pytest

from kktcert import fixtures
from kktcert.certify import recheck_slater, slater_search
from kktcert.expr import evaluate
from kktcert.geometry import is_feasible
from kktcert.model import SlaterCertificate, SlaterFailure, Tolerances, load_problem
from kktcert.solver import VALUE_SLACK, barrier_solve, brute_force_oracle

TOL = Tolerances()
SQRT2 = math.sqrt(2.0)


def start(p, x0):
    return SlaterCertificate(tuple(float(v) for v in x0), recheck_slater(p, SlaterCertificate(tuple(x0), 0.0)))


@pytest.fixture(scope="module")
def hyp1():
    return fixtures.load("hyp1")


@pytest.fixture(scope="module")
def hyp2():
    return fixtures.load("hyp2")


class TestBarrierSolve:
    def test_hyp1(self, hyp1):
        r = barrier_solve(hyp1, start(hyp1, (2, 2)))
        assert r.converged
        np.testing.assert_allclose(r.x, (1, 1), atol=1e-5)
        assert r.fstar == pytest.approx(2.0, abs=1e-5)
        assert r.kkt.lambda_[0] == pytest.approx(1.0, abs=1e-5)

    def test_hyp2(self, hyp2):
        r = barrier_solve(hyp2, start(hyp2, (2, 2)))
        assert r.converged
        np.testing.assert_allclose(r.x, (SQRT2, SQRT2 / 2), atol=1e-5)
        assert r.fstar == pytest.approx(2 * SQRT2, abs=1e-5)

    def test_interior_minimum(self):
        p = fixtures.load("interior")
        r = barrier_solve(p, slater_search(p, 42))
        assert r.converged
        assert r.x[0] == pytest.approx(5.0, abs=1e-5)
        np.testing.assert_allclose(r.kkt.lambda_, 0.0, atol=1e-12)

    def test_requires_slater(self):
        p = fixtures.load("degen")
        s = slater_search(p, 42)
        assert isinstance(s, SlaterFailure)
        with pytest.raises(ValueError):
            barrier_solve(p, s)

    def test_start_must_be_strictly_feasible(self, hyp1):
        with pytest.raises(ValueError):
            barrier_solve(hyp1, SlaterCertificate((1.0, 1.0), 1.0))

    def test_bad_schedule(self, hyp1):
        with pytest.raises(ValueError):
            barrier_solve(hyp1, start(hyp1, (2, 2)), schedule=(1.0, 1.5, 10))

    def test_iteration_cap_reports_non_converged(self, hyp1):
        r = barrier_solve(hyp1, start(hyp1, (9, 9)), max_inner=2)
        assert not r.converged
        assert any(not s.converged and not s.stalled for s in r.stages)

    def test_converged_invariant(self):
        for name in fixtures.CONVEX:
            p = fixtures.load(name)
            r = barrier_solve(p, slater_search(p, 42))
            assert r.converged, name
            assert r.kkt.stationarity_residual <= TOL.eps_kkt
            assert r.kkt.complementarity_residual <= TOL.eps_kkt
            assert is_feasible(p, r.x, TOL) and r.fstar == evaluate(p.objective, r.x)

    def test_random_starts(self, hyp2):
        rng = np.random.default_rng(3)
        for _ in range(5):
            x0 = rng.uniform(1.5, 9.5, 2)
            r = barrier_solve(hyp2, start(hyp2, x0), schedule=(1.0, 0.5, 30))
            assert r.converged
            assert r.fstar == pytest.approx(2 * SQRT2, abs=1e-5)


@pytest.fixture(scope="module")
def records(hyp2):
    buf = io.StringIO()
    r = barrier_solve(hyp2, start(hyp2, (2, 2)), trace=buf)
    return r, [json.loads(line) for line in buf.getvalue().splitlines()]


class TestTrace:
    def test_one_line_per_stage(self, records):
        r, recs = records
        assert len(recs) == len(r.stages) == 40
        assert [rec["mu"] for rec in recs[:3]] == [1.0, 0.5, 0.25]

    def test_strict_feasibility(self, records):
        _, recs = records
        assert all(rec["max_constraint"] < 0 for rec in recs)

    def test_barrier_non_increasing_within_stage(self, records):
        # accepted steps may raise B by at most the Armijo slack, a few ulps
        _, recs = records
        for rec in recs:
            slack = rec["inner_iterations"] * VALUE_SLACK * math.ulp(max(abs(rec["barrier_start"]), 1.0))
            assert rec["barrier_end"] <= rec["barrier_start"] + slack

    def test_multiplier_estimates_are_diagnostics(self, records):
        r, recs = records
        assert recs[-1]["multiplier_estimates"][0] == pytest.approx(r.kkt.lambda_[0], rel=1e-3)


class TestOracle:
    def test_hyp1(self, hyp1):
        o = brute_force_oracle(hyp1, 201, 6)
        assert o.value == pytest.approx(2.0, abs=1e-4)
        np.testing.assert_allclose(o.x, (1, 1), atol=1e-2)
        assert is_feasible(hyp1, o.x, TOL) and o.value == evaluate(hyp1.objective, o.x)

    def test_hyp2(self, hyp2):
        o = brute_force_oracle(hyp2, 201, 6)
        assert o.value == pytest.approx(2 * SQRT2, abs=1e-4)

    def test_argmin_on_curved_boundary(self, hyp2):
        # boundary crossings locate the minimizer along x1*x2 = 1, not just its value
        o = brute_force_oracle(hyp2, 201, 6)
        np.testing.assert_allclose(o.x, (SQRT2, SQRT2 / 2), atol=1e-7)
        assert is_feasible(hyp2, o.x, TOL)

    def test_empty_set(self):
        p = load_problem("n = 1\nbox = [-1,1]\nminimize: x1\nsubject_to:\n  x1^2 + 1 <= 0\n")
        with pytest.raises(ValueError, match="finer grid"):
            brute_force_oracle(p, 21, 2)

    def test_dimension_guard(self):
        p = load_problem("n = 5\nbox = [0,1] x [0,1] x [0,1] x [0,1] x [0,1]\nminimize: x1\nsubject_to:\n  -x1 <= 0\n")
        with pytest.raises(ValueError, match="n <= 4"):
            brute_force_oracle(p, 3, 1)

    def test_deterministic(self, hyp1):
        assert brute_force_oracle(hyp1, 51, 3) == brute_force_oracle(hyp1, 51, 3)

    def test_agrees_with_solver(self):
        for name in fixtures.CONVEX:
            p = fixtures.load(name)
            if p.n > 3:
                continue
            r = barrier_solve(p, slater_search(p, 42))
            o = brute_force_oracle(p, 201 if p.n < 3 else 41, 6)
            assert r.converged
            assert abs(r.fstar - o.value) <= 1e-4, name


class TestRepresentationInvariance:
    def test_scaled_constraint(self, hyp1):
        scaled = fixtures.load("hyp1_scaled")
        a = barrier_solve(hyp1, slater_search(hyp1, 42))
        b = barrier_solve(scaled, slater_search(scaled, 42))
        assert a.converged == b.converged
        assert abs(a.fstar - b.fstar) <= 1e-6
