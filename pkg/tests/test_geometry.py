"""Feasibility, active sets, boundary rays and seeded sampling."""

import math

import numpy as np
import pytest

from kktcert import fixtures
from kktcert.expr import evaluate
from kktcert.geometry import (
    InfeasiblePointError,
    active_set,
    check_feasibility,
    hyperbolic_member,
    is_feasible,
    make_rng,
    psd_member,
    random_direction,
    ray_exit,
    sample_boundary_point,
    sample_feasible_point,
    spawn,
)
from kktcert.model import Tolerances, load_problem

TOL = Tolerances()


@pytest.fixture(scope="module")
def hyp1():
    return fixtures.load("hyp1")


@pytest.fixture(scope="module")
def disk():
    return fixtures.load("diskcomp")


class TestFeasibility:
    def test_boundary_point(self, hyp1):
        assert is_feasible(hyp1, (1, 1), TOL)

    def test_outside(self, hyp1):
        assert not is_feasible(hyp1, (0.5, 0.5), TOL)
        assert check_feasibility(hyp1, (0.5, 0.5), TOL).values[0] == 0.75

    def test_interior(self, hyp1):
        assert is_feasible(hyp1, (2, 2), TOL)

    def test_slack(self, hyp1):
        assert is_feasible(hyp1, (1, 1 - 5e-10), TOL)
        assert not is_feasible(hyp1, (1, 1 - 5e-9), TOL)

    def test_domain_violation_flagged(self):
        p = load_problem("n = 1\nbox = [-1,1]\nminimize: x1\nsubject_to:\n  -log(x1) <= 0\n")
        check = check_feasibility(p, (-0.5,), TOL)
        assert not check.feasible and check.domain_error

    def test_wrong_length(self, hyp1):
        with pytest.raises(ValueError):
            is_feasible(hyp1, (1.0,), TOL)


class TestActiveSet:
    def test_hyperbola_active(self, hyp1):
        assert active_set(hyp1, (1, 1), TOL).indices == {1}

    def test_interior_empty(self, hyp1):
        assert active_set(hyp1, (2, 2), TOL).indices == frozenset()

    def test_infeasible_point(self, hyp1):
        with pytest.raises(InfeasiblePointError):
            active_set(hyp1, (1, 0), TOL)

    def test_affine_corner(self):
        assert active_set(fixtures.load("affine"), (1, 0), TOL).indices == {1, 3}


class TestBoundaryPoint:
    def test_hyperbola_crossing(self, hyp1):
        x = sample_boundary_point(hyp1, 1, (2, 2), (-1, -1), TOL)
        np.testing.assert_allclose(x, (1, 1), atol=1e-8)

    def test_no_crossing_towards_box_corner(self, hyp1):
        assert sample_boundary_point(hyp1, 1, (2, 2), (1, 1), TOL) is None

    def test_unit_circle(self, disk):
        x = sample_boundary_point(disk, 1, (1.5, 0), (-1, 0), TOL)
        np.testing.assert_allclose(x, (1, 0), atol=1e-12)

    def test_crossing_through_other_constraint(self):
        # the ray leaves through x2 >= 0 before 1 - x1 - x2 <= 0 activates
        p = fixtures.load("affine")
        assert sample_boundary_point(p, 1, (2, 2), (0, -1), TOL) is None
        assert sample_boundary_point(p, 3, (2, 2), (0, -1), TOL) == (2.0, 0.0)

    def test_needs_strict_interior(self, hyp1):
        with pytest.raises(ValueError):
            sample_boundary_point(hyp1, 1, (1, 1), (1, 0), TOL)

    def test_direction_nonzero(self, hyp1):
        with pytest.raises(ValueError):
            sample_boundary_point(hyp1, 1, (2, 2), (0, 0), TOL)

    def test_bound_constraint_on_box_edge(self):
        p = fixtures.load("hyp2")
        x = sample_boundary_point(p, 2, (5, 5), (1, 0), TOL)
        assert x == (10.0, 5.0)

    def test_random_rays_give_active_feasible_points(self, hyp1, disk):
        rng = make_rng(0)
        for p, x0 in ((hyp1, (3.0, 3.0)), (disk, (1.5, 1.5))):
            hits = 0
            for _ in range(200):
                x = sample_boundary_point(p, 1, x0, random_direction(rng, 2), TOL)
                if x is None:
                    continue
                hits += 1
                assert is_feasible(p, x, TOL)
                assert 1 in active_set(p, x, TOL).indices
            assert hits > 20

    def test_crossing_resolved_to_float_precision(self, disk):
        x = ray_exit(disk, (1.5, 1.5), (-0.6, -0.8), TOL)
        g = evaluate(disk.constraints[0], x)
        assert -1e-15 <= g <= 0.0

    def test_wide_box_converges(self):
        p = load_problem("n = 1\nbox = [-1000,1000]\nminimize: x1\nsubject_to:\n  x1 - 999.123 <= 0\n")
        x = sample_boundary_point(p, 1, (0.0,), (1.0,), TOL)
        assert abs(x[0] - 999.123) <= 1e-12


class TestSampling:
    def test_feasible_draw(self, hyp1):
        x = sample_feasible_point(hyp1, 42, TOL)
        assert x is not None and is_feasible(hyp1, x, TOL)

    def test_empty_set(self):
        p = load_problem("n = 1\nbox = [-1,1]\nminimize: x1\nsubject_to:\n  x1^2 + 1 <= 0\n")
        assert sample_feasible_point(p, 42, TOL) is None

    def test_deterministic(self, hyp1):
        assert sample_feasible_point(hyp1, 7, TOL) == sample_feasible_point(hyp1, 7, TOL)
        assert sample_feasible_point(hyp1, 7, TOL) != sample_feasible_point(hyp1, 8, TOL)

    def test_streams_bit_identical(self):
        a = spawn(42, 2, 1).random(5)
        b = spawn(42, 2, 1).random(5)
        assert a.tobytes() == b.tobytes()
        assert spawn(42, 2, 0).random() != spawn(42, 2, 1).random()

    def test_directions_unit_length(self):
        rng = make_rng(1)
        for _ in range(50):
            assert math.isclose(float(np.linalg.norm(random_direction(rng, 3))), 1.0)


class TestMembershipEquivalence:
    def test_boundary_anchor(self):
        assert hyperbolic_member((2, 0.5)) and psd_member((2, 0.5))

    def test_outside_examples(self):
        assert not hyperbolic_member((-1, -2)) and not psd_member((-1, -2))
        assert not hyperbolic_member((0.5, 1.0)) and not psd_member((0.5, 1.0))

    def test_grid(self):
        g = np.linspace(-1.0, 3.0, 101)
        assert all(hyperbolic_member((a, b)) == psd_member((a, b)) for a in g for b in g)

    def test_psd_matches_eigenvalues(self):
        g = np.linspace(-1.0, 3.0, 41)
        for a in g:
            for b in g:
                eig = np.linalg.eigvalsh([[a, 1.0], [1.0, b]])
                if abs(eig[0]) > 1e-9:
                    assert psd_member((a, b)) == (eig[0] > 0)
