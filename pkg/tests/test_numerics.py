"""Numerical kernels: projections, linear solves, bisection, and the
first-order inner solvers."""

import numpy as np
import pytest

from fpopt import numerics
from fpopt.exceptions import BracketError, ConditioningError
from fpopt.numerics import (
    SolverOptions,
    bisection_root,
    hpd_solve,
    make_rng,
    project_box,
    project_group_ball,
    project_simplex_cap,
    projected_gradient_maximize,
    projected_subgradient_max_min,
)

from conftest import random_hpd


class TestProjections:
    def test_box_examples(self):
        np.testing.assert_allclose(project_box(np.array([2.0]), 0.0, 1.0), [1.0])
        np.testing.assert_allclose(project_box(np.array([-1.0]), 0.0, 1.0), [0.0])
        np.testing.assert_allclose(project_box(np.array([0.5]), 0.0, 1.0), [0.5])

    def test_group_ball_examples(self):
        groups = [np.array([0, 1])]
        v = np.array([2.0, 0.0])
        np.testing.assert_allclose(project_group_ball(v, groups, [1.0]),
                                   [1.0, 0.0])
        v = np.array([0.3, 0.4])
        np.testing.assert_allclose(project_group_ball(v, groups, [1.0]), v)
        # only the violating group is rescaled
        groups = [np.array([0, 1]), np.array([2, 3])]
        v = np.array([3.0, 4.0, 0.1, 0.2])
        out = project_group_ball(v, groups, [1.0, 1.0])
        np.testing.assert_allclose(out[:2], [0.6, 0.8])
        np.testing.assert_allclose(out[2:], v[2:])

    def test_simplex_cap(self):
        out = project_simplex_cap(np.array([0.5, 0.7]), 1.0)
        assert out.sum() == pytest.approx(1.0)
        assert np.all(out >= 0)
        np.testing.assert_allclose(project_simplex_cap(np.array([0.2, 0.3]), 1.0),
                                   [0.2, 0.3])
        out = project_simplex_cap(np.array([-1.0, 0.4]), 1.0)
        np.testing.assert_allclose(out, [0.0, 0.4])

    def test_idempotent_bit_for_bit(self, rng):
        groups = [np.array([0, 1, 2]), np.array([3, 4])]
        for _ in range(1000):
            x = rng.normal(scale=3.0, size=5)
            b1 = project_box(x, -1.0, 1.0)
            assert np.array_equal(project_box(b1, -1.0, 1.0), b1)
            g1 = project_group_ball(x, groups, [1.0, 2.0])
            assert np.array_equal(project_group_ball(g1, groups, [1.0, 2.0]), g1)
            s1 = project_simplex_cap(x, 1.5)
            assert np.array_equal(project_simplex_cap(s1, 1.5), s1)

    def test_complex_group_ball(self, rng):
        v = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        out = project_group_ball(v, [np.arange(4)], [0.5])
        assert np.linalg.norm(out) == pytest.approx(0.5)
        # direction preserved
        cos = abs(np.vdot(out, v)) / (np.linalg.norm(out) * np.linalg.norm(v))
        assert cos == pytest.approx(1.0)


class TestHpdSolve:
    def test_examples(self):
        a = np.array([1.0 + 2j, -3.0])
        np.testing.assert_allclose(hpd_solve(np.eye(2), a), a)
        np.testing.assert_allclose(hpd_solve(np.diag([2.0, 4.0]),
                                             np.array([2.0, 2.0j])),
                                   [1.0, 0.5j])

    def test_random_roundtrip(self, rng):
        for _ in range(200):
            n = int(rng.integers(1, 17))
            B = random_hpd(rng, n)
            a = rng.standard_normal(n) + 1j * rng.standard_normal(n)
            x = hpd_solve(B, a)
            assert np.linalg.norm(B @ x - a) <= 1e-10 * np.linalg.norm(a)

    def test_conditioned_roundtrip(self, rng):
        # condition number up to 1e6
        for _ in range(100):
            n = int(rng.integers(2, 17))
            q, _ = np.linalg.qr(rng.standard_normal((n, n))
                                + 1j * rng.standard_normal((n, n)))
            eigs = 10.0 ** rng.uniform(-3, 3, size=n)
            B = (q * eigs) @ q.conj().T
            B = 0.5 * (B + B.conj().T)
            a = rng.standard_normal(n) + 1j * rng.standard_normal(n)
            x = hpd_solve(B, a)
            assert np.linalg.norm(B @ x - a) <= 1e-9 * np.linalg.norm(a)

    def test_not_positive_definite(self):
        with pytest.raises(ConditioningError):
            hpd_solve(np.array([[1.0, 0.0], [0.0, -1.0]]), np.ones(2))


class TestBisection:
    def test_linear_root(self):
        assert bisection_root(lambda x: x - 1.0, 0.0, 2.0, 1e-12) == \
            pytest.approx(1.0, abs=1e-11)

    def test_slack_returns_lower_end(self):
        # decreasing function already below zero at the lower end
        assert bisection_root(lambda x: -1.0 - x, 0.0, 1.0, 1e-12) == 0.0

    def test_expands_bracket(self):
        root = bisection_root(lambda x: 10.0 - x, 0.0, 1.0, 1e-10)
        assert root == pytest.approx(10.0, abs=1e-9)

    def test_root_below_interval_returns_lower_end(self):
        # increasing function whose crossing lies below the interval
        assert bisection_root(lambda x: 1.0 + x, 0.0, 1.0, 1e-10) == 0.0

    def test_bracket_error(self):
        # strictly positive and decreasing: expansion can never bracket
        with pytest.raises(BracketError):
            bisection_root(lambda x: 1.0 / (1.0 + x), 0.0, 1.0, 1e-10)

    def test_ftol_stop(self):
        calls = []

        def f(x):
            calls.append(x)
            return 2.0 - x

        root = bisection_root(f, 0.0, 8.0, tol=1e-15, ftol=1e-3)
        assert abs(2.0 - root) <= 1e-3


class TestRng:
    def test_reproducible(self):
        a = make_rng(123).standard_normal(16)
        b = make_rng(123).standard_normal(16)
        assert np.array_equal(a, b)
        c = make_rng(124).standard_normal(16)
        assert not np.array_equal(a, c)


class TestProjectedGradient:
    def test_interior_optimum(self):
        c = np.array([0.3, -0.2, 0.1])
        res = projected_gradient_maximize(
            lambda x: -np.sum((x - c) ** 2), lambda x: -2.0 * (x - c),
            lambda x: project_box(x, -1.0, 1.0), np.zeros(3),
            SolverOptions(grad_tol=1e-12))
        np.testing.assert_allclose(res.x, c, atol=1e-10)
        assert res.converged

    def test_boundary_optimum(self):
        res = projected_gradient_maximize(
            lambda x: float(x.sum()), lambda x: np.ones_like(x),
            lambda x: project_box(x, 0.0, 1.0), np.full(2, 0.25),
            SolverOptions(grad_tol=1e-12))
        np.testing.assert_allclose(res.x, [1.0, 1.0], atol=1e-12)

    def test_matches_active_set_oracle(self, rng):
        # concave quadratics over boxes vs exhaustive active-set solve
        for _ in range(40):
            n = int(rng.integers(1, 5))
            q, _ = np.linalg.qr(rng.standard_normal((n, n)))
            eigs = rng.uniform(0.5, 5.0, size=n)
            Q = (q * eigs) @ q.T
            b = rng.normal(scale=2.0, size=n)
            value = lambda x, Q=Q, b=b: float(-0.5 * x @ Q @ x + b @ x)
            grad = lambda x, Q=Q, b=b: -Q @ x + b
            best_val, best_x = -np.inf, None
            # enumerate lo/free/hi patterns for the exact solution
            for pattern in range(3**n):
                fixed = np.zeros(n)
                free = []
                digits = pattern
                for k in range(n):
                    state = digits % 3
                    digits //= 3
                    if state == 0:
                        fixed[k] = -1.0
                    elif state == 1:
                        fixed[k] = 1.0
                    else:
                        free.append(k)
                x = fixed.copy()
                if free:
                    idx = np.array(free, dtype=int)
                    rest = np.setdiff1d(np.arange(n), idx)
                    rhs = b[idx] - Q[np.ix_(idx, rest)] @ fixed[rest]
                    x[idx] = np.linalg.solve(Q[np.ix_(idx, idx)], rhs)
                if np.all(np.abs(x) <= 1.0 + 1e-12):
                    v = value(np.clip(x, -1, 1))
                    if v > best_val:
                        best_val, best_x = v, np.clip(x, -1, 1)
            res = projected_gradient_maximize(
                value, grad, lambda x: project_box(x, -1.0, 1.0),
                rng.uniform(-1, 1, size=n),
                SolverOptions(max_inner_iters=2000, grad_tol=1e-12))
            assert res.value == pytest.approx(best_val, abs=1e-6)
            np.testing.assert_allclose(res.x, best_x, atol=1e-4)

    def test_monotone_values(self, rng):
        values = []

        def value(x):
            v = -np.sum((x - 0.5) ** 4) + float(x[0])
            values.append(v)
            return v

        def grad(x):
            g = -4.0 * (x - 0.5) ** 3
            g[0] += 1.0
            return g

        projected_gradient_maximize(value, grad,
                                    lambda x: project_box(x, 0.0, 1.0),
                                    rng.uniform(0, 1, size=3),
                                    SolverOptions(grad_tol=1e-10))
        accepted = np.maximum.accumulate(values)
        assert accepted[-1] >= values[0]


class TestSubgradientMaxMin:
    def test_two_plane_kink(self):
        # max min(x, 1-x) on [0, 2]: optimum at the kink x = 0.5
        res = projected_subgradient_max_min(
            lambda x: np.array([x[0], 1.0 - x[0]]),
            lambda x: np.array([[1.0], [-1.0]]),
            lambda x: project_box(x, 0.0, 2.0), np.array([1.7]),
            SolverOptions(max_inner_iters=3000, grad_tol=1e-10))
        assert res.x[0] == pytest.approx(0.5, abs=1e-6)
        assert res.value == pytest.approx(0.5, abs=1e-6)

    def test_never_below_start(self, rng):
        def vals(x):
            return np.array([-np.sum((x - 1.0) ** 2), -np.sum((x + 1.0) ** 2)])

        def grads(x):
            return np.array([-2.0 * (x - 1.0), -2.0 * (x + 1.0)])

        for _ in range(10):
            x0 = rng.uniform(-2, 2, size=2)
            start = float(vals(x0).min())
            res = projected_subgradient_max_min(
                vals, grads, lambda x: project_box(x, -2.0, 2.0), x0,
                SolverOptions(max_inner_iters=500, grad_tol=1e-8))
            assert res.value >= start - 1e-12
