"""Ratio-maximization core: quadratic transform, the classic
single-ratio parametric iteration, and the generic alternating driver
for multi-ratio problems.

The central identity: for A >= 0, B > 0 the surrogate
``2 y sqrt(A) - y^2 B`` is concave in y, is maximized at
``y = sqrt(A)/B``, and its maximum equals A/B exactly.  Replacing every
ratio of a sum / sum-of-functions / max-min objective with its
surrogate therefore preserves the objective value while decoupling
numerators from denominators, and alternating closed-form y-updates
with a convex maximization in x climbs the original objective
monotonically.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from . import numerics
from .exceptions import DomainError
from .numerics import PgResult, SolverOptions

__all__ = [
    "QtParams",
    "qt_value",
    "qt_optimal_y",
    "qt_md_value",
    "qt_md_optimal_y",
    "RatioTerm",
    "Combiner",
    "OuterFunction",
    "FeasibleSet",
    "RatioProblem",
    "AuxiliaryVector",
    "IterationTrace",
    "TraceRecord",
    "dinkelbach_solve",
    "fp_solve",
]

_HERMITIAN_TOL = 1e-10


# ---------------------------------------------------------------------------
# scalar and multidimensional transforms


@dataclass(frozen=True)
class QtParams:
    """Affine reparameterization (t1, t2) of the auxiliary variable.

    The surrogate becomes ``2 (t1 y + t2) sqrt(A) - (t1 y + t2)^2 B``;
    the default (1, 0) is the canonical form.
    """

    t1: float = 1.0
    t2: float = 0.0

    def __post_init__(self) -> None:
        if self.t1 == 0.0:
            raise ValueError("t1 must be nonzero")


_DEFAULT_QT = QtParams()


def _check_ratio_domain(A, B) -> None:
    if np.any(np.asarray(A) < 0):
        raise DomainError(f"numerator must be nonnegative, got {A}")
    if np.any(np.asarray(B) <= 0):
        raise DomainError(f"denominator must be strictly positive, got {B}")


def qt_value(A, B, y, params: QtParams = _DEFAULT_QT):
    """Quadratic-transform surrogate 2(t1 y + t2) sqrt(A) - (t1 y + t2)^2 B.

    Accepts scalars or broadcastable arrays.
    """
    _check_ratio_domain(A, B)
    u = params.t1 * np.asarray(y) + params.t2
    return 2.0 * u * np.sqrt(A) - u * u * np.asarray(B)


def qt_optimal_y(A, B):
    """Maximizer sqrt(A)/B of the canonical surrogate; substituting it
    back recovers A/B exactly.  Accepts scalars or arrays."""
    _check_ratio_domain(A, B)
    return np.sqrt(A) / np.asarray(B)


def _check_hermitian(B: np.ndarray) -> None:
    scale = max(float(np.linalg.norm(B)), 1.0)
    if np.linalg.norm(B - B.conj().T) > _HERMITIAN_TOL * scale:
        raise DomainError("matrix is not Hermitian within tolerance")


def qt_md_value(a: np.ndarray, B: np.ndarray, y: np.ndarray) -> float:
    """Vector surrogate 2 Re{y^H a} - y^H B y for Hermitian positive-definite B."""
    a = np.asarray(a)
    y = np.asarray(y)
    B = np.asarray(B)
    if a.shape != y.shape or B.shape != (a.size, a.size):
        raise DomainError(
            f"dimension mismatch: a {a.shape}, B {B.shape}, y {y.shape}"
        )
    _check_hermitian(B)
    return float(2.0 * np.real(np.vdot(y, a)) - np.real(np.vdot(y, B @ y)))


def qt_md_optimal_y(a: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Maximizer B^{-1} a of the vector surrogate; the maximum equals
    a^H B^{-1} a."""
    _check_hermitian(np.asarray(B))
    return numerics.hpd_solve(B, a)


# ---------------------------------------------------------------------------
# problem description


@dataclass(frozen=True)
class RatioTerm:
    """One ratio A(x)/B(x) given by value and gradient evaluators.

    A must be nonnegative and B strictly positive on the feasible set;
    violations raise :class:`DomainError` at evaluation time.
    """

    numerator: Callable[[np.ndarray], float]
    denominator: Callable[[np.ndarray], float]
    numerator_gradient: Callable[[np.ndarray], np.ndarray]
    denominator_gradient: Callable[[np.ndarray], np.ndarray]

    def evaluate(self, x: np.ndarray, index: int | None = None) -> tuple[float, float]:
        A = float(self.numerator(x))
        B = float(self.denominator(x))
        label = "" if index is None else f" (term {index})"
        if A < 0:
            raise DomainError(f"numerator went negative{label}: {A}")
        if B <= 0:
            raise DomainError(f"denominator not strictly positive{label}: {B}")
        return A, B


class Combiner(Enum):
    SUM = "sum"
    SUM_OF_FUNCTIONS = "sum_of_functions"
    MAX_MIN = "max_min"


@dataclass(frozen=True)
class OuterFunction:
    """Nondecreasing concave scalar function with its derivative."""

    value: Callable[[float], float]
    derivative: Callable[[float], float]


class FeasibleSet:
    """Convex feasible set in one of the shapes the applications need.

    Construct via :meth:`box`, :meth:`group_ball`, or
    :meth:`simplex_sum`.
    """

    BOX = "box"
    PER_GROUP_BALL = "per_group_ball"
    SIMPLEX_SUM = "simplex_sum"

    def __init__(self, kind, dimension, lo=None, hi=None, groups=None, radii=None,
                 budgets=None):
        self.kind = kind
        self.dimension = int(dimension)
        self.lo = lo
        self.hi = hi
        self.groups = groups
        self.radii = radii
        self.budgets = budgets

    @classmethod
    def box(cls, lo, hi) -> "FeasibleSet":
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        hi = np.atleast_1d(np.asarray(hi, dtype=float))
        if lo.shape != hi.shape:
            raise ValueError("bound shapes differ")
        if not (np.isfinite(lo).all() and np.isfinite(hi).all()):
            raise ValueError("bounds must be finite")
        if np.any(lo > hi):
            raise ValueError("lower bound exceeds upper bound")
        return cls(cls.BOX, lo.size, lo=lo, hi=hi)

    @classmethod
    def group_ball(cls, groups: Sequence[np.ndarray], radii) -> "FeasibleSet":
        radii = np.atleast_1d(np.asarray(radii, dtype=float))
        if np.any(radii <= 0):
            raise ValueError("radii must be positive")
        dim = sum(np.asarray(g).size for g in groups)
        return cls(cls.PER_GROUP_BALL, dim,
                   groups=[np.asarray(g, dtype=int) for g in groups], radii=radii)

    @classmethod
    def simplex_sum(cls, groups: Sequence[np.ndarray], budgets) -> "FeasibleSet":
        budgets = np.atleast_1d(np.asarray(budgets, dtype=float))
        if np.any(budgets <= 0):
            raise ValueError("budgets must be positive")
        dim = sum(np.asarray(g).size for g in groups)
        return cls(cls.SIMPLEX_SUM, dim,
                   groups=[np.asarray(g, dtype=int) for g in groups], budgets=budgets)

    def project(self, x: np.ndarray) -> np.ndarray:
        if self.kind == self.BOX:
            return numerics.project_box(x, self.lo, self.hi)
        if self.kind == self.PER_GROUP_BALL:
            return numerics.project_group_ball(x, self.groups, self.radii)
        out = np.asarray(x, dtype=float).copy()
        flat = out.reshape(-1)
        for idx, budget in zip(self.groups, self.budgets):
            flat[idx] = numerics.project_simplex_cap(flat[idx], budget)
        return out

    def contains(self, x: np.ndarray, tol: float = 1e-9) -> bool:
        x = np.asarray(x)
        return bool(np.linalg.norm(self.project(x) - x) <= tol * (1.0 + np.linalg.norm(x)))


@dataclass(frozen=True)
class RatioProblem:
    """Multi-ratio maximization over a convex feasible set."""

    terms: tuple[RatioTerm, ...]
    feasible_set: FeasibleSet
    combiner: Combiner = Combiner.SUM
    outer_functions: tuple[OuterFunction, ...] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "terms", tuple(self.terms))
        if len(self.terms) < 1:
            raise ValueError("at least one ratio term is required")
        if self.combiner is Combiner.SUM_OF_FUNCTIONS:
            if self.outer_functions is None or len(self.outer_functions) != len(self.terms):
                raise ValueError(
                    "sum-of-functions form needs one outer function per term"
                )
        elif self.outer_functions is not None:
            raise ValueError(f"{self.combiner.value} form carries no outer functions")

    @property
    def n_terms(self) -> int:
        return len(self.terms)

    def ratios(self, x: np.ndarray) -> np.ndarray:
        vals = np.empty(self.n_terms)
        for m, term in enumerate(self.terms):
            A, B = term.evaluate(x, m)
            vals[m] = A / B
        return vals

    def objective(self, x: np.ndarray) -> float:
        """Objective in the original ratio metric."""
        r = self.ratios(x)
        if self.combiner is Combiner.SUM:
            return float(r.sum())
        if self.combiner is Combiner.SUM_OF_FUNCTIONS:
            return float(sum(f.value(v) for f, v in zip(self.outer_functions, r)))
        return float(r.min())


@dataclass
class AuxiliaryVector:
    """Transform variables, one per ratio term (real scalars for the
    scalar transform, complex vectors for the multidimensional one)."""

    y: np.ndarray | list


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    objective: float
    residual: float
    elapsed: float


@dataclass
class IterationTrace:
    """Per-iteration progress records with indices counting up from 0."""

    records: list[TraceRecord] = field(default_factory=list)

    def append(self, iteration: int, objective: float, residual: float,
               elapsed: float) -> None:
        expected = self.records[-1].iteration + 1 if self.records else 0
        if iteration != expected:
            raise ValueError(f"iteration {iteration} out of order (expected {expected})")
        if residual < 0:
            raise ValueError("residual must be nonnegative")
        self.records.append(TraceRecord(iteration, float(objective),
                                        float(residual), float(elapsed)))

    def __len__(self) -> int:
        return len(self.records)

    @property
    def iterations(self) -> np.ndarray:
        return np.array([r.iteration for r in self.records], dtype=int)

    @property
    def objectives(self) -> np.ndarray:
        return np.array([r.objective for r in self.records])

    @property
    def residuals(self) -> np.ndarray:
        return np.array([r.residual for r in self.records])

    @property
    def final_objective(self) -> float:
        return self.records[-1].objective


# ---------------------------------------------------------------------------
# solvers


def _default_inner(value, gradient, project, x0, options=None) -> PgResult:
    return numerics.projected_gradient_maximize(value, gradient, project, x0,
                                                options=options)


def _term_values(problem, x, y):
    """Surrogate values u_m = 2 y_m sqrt(A_m) - y_m^2 B_m."""
    u = np.empty(problem.n_terms)
    for m, term in enumerate(problem.terms):
        A, B = term.evaluate(x, m)
        u[m] = 2.0 * y[m] * np.sqrt(A) - y[m] ** 2 * B
    return u


def _term_values_and_grads(problem, x, y):
    """Surrogate values with their gradients in x for fixed y."""
    M = problem.n_terms
    u = np.empty(M)
    grads = []
    for m, term in enumerate(problem.terms):
        A, B = term.evaluate(x, m)
        root = np.sqrt(A)
        u[m] = 2.0 * y[m] * root - y[m] ** 2 * B
        # d/dx 2 y sqrt(A) = (y / sqrt(A)) dA; the coefficient vanishes
        # with y when A == 0 (y is always sqrt(A)/B here)
        coef = y[m] / root if root > 0 else 0.0
        grads.append(coef * np.asarray(term.numerator_gradient(x))
                     - y[m] ** 2 * np.asarray(term.denominator_gradient(x)))
    return u, grads


def _original_gradient(problem, x):
    """Gradient of the original objective; for max-min, the average over
    the active terms."""
    r = problem.ratios(x)
    grads = []
    for m, term in enumerate(problem.terms):
        A, B = term.evaluate(x, m)
        gA = np.asarray(term.numerator_gradient(x))
        gB = np.asarray(term.denominator_gradient(x))
        grads.append((gA * B - A * gB) / B**2)
    if problem.combiner is Combiner.SUM:
        return sum(grads)
    if problem.combiner is Combiner.SUM_OF_FUNCTIONS:
        return sum(f.derivative(v) * g
                   for f, v, g in zip(problem.outer_functions, r, grads))
    active = r <= r.min() + 1e-12 * (1.0 + abs(r.min()))
    return np.mean([g for g, a in zip(grads, active) if a], axis=0)


def stationarity_residual(problem: RatioProblem, x: np.ndarray) -> float:
    """Norm of the unit-step projected-gradient mapping of the original
    objective; zero exactly at stationary points."""
    g = _original_gradient(problem, x)
    return float(np.linalg.norm(x - problem.feasible_set.project(x + g)))


def dinkelbach_solve(
    problem: RatioProblem,
    inner_solver=None,
    x0: np.ndarray | None = None,
    tol: float = 1e-10,
    max_iters: int = 100,
    options: SolverOptions | None = None,
    callback: Callable | None = None,
):
    """Classic parametric iteration for a single-ratio problem.

    Alternates maximizing A(x) - y B(x) over the feasible set with the
    update y <- A(x)/B(x); the y sequence is nondecreasing and, for a
    concave-convex ratio, converges superlinearly to the global maximum
    of A/B.  Stops when |y_new - y| <= tol.
    """
    if problem.n_terms != 1:
        raise ValueError(
            f"single-ratio iteration needs exactly one term, got {problem.n_terms}"
        )
    if problem.combiner is not Combiner.SUM:
        raise ValueError("single-ratio iteration applies to the plain ratio form")
    term = problem.terms[0]
    fs = problem.feasible_set
    inner = inner_solver or _default_inner
    x = np.atleast_1d(np.asarray(x0, dtype=float))
    if not fs.contains(x):
        raise ValueError("starting point is infeasible")

    t0 = time.perf_counter()
    trace = IterationTrace()
    A, B = term.evaluate(x, 0)
    y = A / B
    trace.append(0, y, stationarity_residual(problem, x), time.perf_counter() - t0)
    if callback is not None:
        callback(0, x.copy(), y, y)
    for t in range(1, max_iters + 1):
        def value(p, _y=y):
            A, B = term.evaluate(p, 0)
            return A - _y * B

        def gradient(p, _y=y):
            return (np.asarray(term.numerator_gradient(p))
                    - _y * np.asarray(term.denominator_gradient(p)))

        result = inner(value, gradient, fs.project, x, options)
        x = result.x
        A, B = term.evaluate(x, 0)
        y_new = A / B
        trace.append(t, y_new, stationarity_residual(problem, x),
                     time.perf_counter() - t0)
        if callback is not None:
            callback(t, x.copy(), y_new, y_new)
        done = abs(y_new - y) <= tol
        y = y_new
        if done:
            break
    return x, y, trace


def fp_solve(
    problem: RatioProblem,
    inner_solver=None,
    x0: np.ndarray | None = None,
    tol: float = 1e-8,
    max_iters: int = 1000,
    options: SolverOptions | None = None,
    callback: Callable | None = None,
):
    """Alternating maximization for multi-ratio problems.

    Each iteration sets every y_m to sqrt(A_m)/B_m in closed form, then
    maximizes the transformed objective over x with y fixed: the sum or
    sum-of-functions forms go through a projected-gradient solve, the
    max-min form through projected subgradient ascent on the pointwise
    minimum of the transformed terms.  The objective, reported in the
    original ratio metric, is nondecreasing every iteration; iteration
    stops when its change falls below ``tol * (1 + |objective|)``.
    """
    fs = problem.feasible_set
    x = np.atleast_1d(np.asarray(x0, dtype=float))
    if not fs.contains(x):
        raise ValueError("starting point is infeasible")
    x = fs.project(x)

    t0 = time.perf_counter()
    trace = IterationTrace()
    f = problem.objective(x)
    trace.append(0, f, stationarity_residual(problem, x), time.perf_counter() - t0)
    y = np.zeros(problem.n_terms)
    if callback is not None:
        callback(0, x.copy(), y.copy(), f)

    for t in range(1, max_iters + 1):
        for m, term in enumerate(problem.terms):
            A, B = term.evaluate(x, m)
            y[m] = qt_optimal_y(A, B)

        if problem.combiner is Combiner.MAX_MIN:
            def comp_values(p, _y=y.copy()):
                return _term_values(problem, p, _y)

            def comp_grads(p, _y=y.copy()):
                _, g = _term_values_and_grads(problem, p, _y)
                return np.asarray(g)

            if inner_solver is None:
                result = numerics.projected_subgradient_max_min(
                    comp_values, comp_grads, fs.project, x, options)
            else:
                result = inner_solver(comp_values, comp_grads, fs.project, x, options)
        else:
            if problem.combiner is Combiner.SUM:
                def value(p, _y=y.copy()):
                    return float(_term_values(problem, p, _y).sum())

                def gradient(p, _y=y.copy()):
                    _, g = _term_values_and_grads(problem, p, _y)
                    return sum(g)
            else:
                def value(p, _y=y.copy()):
                    u = _term_values(problem, p, _y)
                    return float(sum(f_m.value(v)
                                     for f_m, v in zip(problem.outer_functions, u)))

                def gradient(p, _y=y.copy()):
                    u, g = _term_values_and_grads(problem, p, _y)
                    return sum(f_m.derivative(v) * gm
                               for f_m, v, gm in zip(problem.outer_functions, u, g))

            inner = inner_solver or _default_inner
            result = inner(value, gradient, fs.project, x, options)

        x = result.x
        f_new = problem.objective(x)
        trace.append(t, f_new, stationarity_residual(problem, x),
                     time.perf_counter() - t0)
        if callback is not None:
            callback(t, x.copy(), y.copy(), f_new)
        done = abs(f_new - f) <= tol * (1.0 + abs(f_new))
        f = f_new
        if done:
            break
    return x, AuxiliaryVector(y=y.copy()), trace
