"""Deterministic textbook fixtures: the scalar ratio x / (x^2 + 1) on
x >= 0 and the two-dimensional single-ratio example, used to exhibit
convergence behavior of the two transforms.

For the quadratic-transform fixture both alternating updates have exact
closed forms (y = sqrt(x)/(x^2+1), then x = (2y)^(-2/3)), collapsing
the iteration to a scalar recursion in y with limit 1/2 and asymptotic
error ratio 1/3.  The ratio approaches its limit at the third power of
the error scale, far below float64 resolution after ~25 steps, so the
recursion runs in extended precision and is rounded only for output.
The float64 solver path is cross-checked against the same recursion
over its valid early window in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import mpmath as mp
import numpy as np

from . import core
from .core import Combiner, FeasibleSet, RatioProblem, RatioTerm
from .numerics import SolverOptions

__all__ = [
    "TextbookRow",
    "qt_rate_fixture",
    "dinkelbach_fixture",
    "fig_ratio_problem",
    "fig_ratio_fixture",
    "FIG_RATIO_OPTIMUM",
]

#: global maximum of x1 / ((x1-1)^2 + (x2-2)^2 + 1) over the box [0,4]^2,
#: attained at (sqrt(2), 2); pinned against the grid-search oracle in the
#: acceptance tests
FIG_RATIO_OPTIMUM = 0.5 * (1.0 + np.sqrt(2.0))

_RECURSION_DPS = 60


@dataclass(frozen=True)
class TextbookRow:
    iteration: int
    objective: float
    residual: float
    y: float
    error_ratio: float


def _ratio_objective(x: float) -> float:
    return x / (x * x + 1.0)


def scalar_ratio_problem(hi: float = 8.0) -> RatioProblem:
    """The scalar fixture as a ratio problem over the box [0, hi]."""
    term = RatioTerm(
        numerator=lambda x: x[0],
        denominator=lambda x: x[0] ** 2 + 1.0,
        numerator_gradient=lambda x: np.array([1.0]),
        denominator_gradient=lambda x: np.array([2.0 * x[0]]),
    )
    return RatioProblem(terms=(term,), feasible_set=FeasibleSet.box([0.0], [hi]))


def qt_rate_fixture(n_iters: int = 60, y0: float = 0.1) -> list[TextbookRow]:
    """Quadratic-transform iteration on the scalar fixture with both
    block updates solved exactly, tracked as rows (y, error ratio).

    Row t carries y_t (y_0 is the initial value), the objective at the
    matching iterate x_t = (2 y_t)^(-2/3), and the error ratio
    |1/2 - y_t| / |1/2 - y_{t-1}|, which tends to 1/3.
    """
    rows = []
    with mp.workdps(_RECURSION_DPS):
        half = mp.mpf(1) / 2
        y = mp.mpf(y0)
        err_prev = abs(half - y)
        for t in range(n_iters + 1):
            x = (2 * y) ** (mp.mpf(-2) / 3)
            err = abs(half - y)
            ratio = float(err / err_prev) if t > 0 and err_prev > 0 else float("nan")
            obj = float(x / (x * x + 1))
            # first-order residual of the ratio objective at x (interior)
            res = abs(float((1 - x * x) / (x * x + 1) ** 2))
            rows.append(TextbookRow(t, obj, res, float(y), ratio))
            err_prev = err
            y = mp.sqrt(x) / (x * x + 1)
    return rows


def qt_rate_solver_trace(n_iters: int = 12) -> np.ndarray:
    """y iterates of the generic float64 solver on the same fixture,
    started so its first auxiliary value is 0.1."""
    x0 = float(0.2 ** (-2.0 / 3.0))
    ys: list[float] = []
    core.fp_solve(
        scalar_ratio_problem(), x0=np.array([x0]), tol=0.0, max_iters=n_iters,
        options=SolverOptions(max_inner_iters=500, grad_tol=1e-13),
        callback=lambda t, x, y, f: ys.append(float(y[0])),
    )
    return np.array(ys[1:])  # drop the placeholder at iteration 0


def dinkelbach_fixture(x0: float = 2.0, n_iters: int = 12) -> list[TextbookRow]:
    """Classic parametric iteration on the scalar fixture from x0 = 2.

    The y updates converge superlinearly to 1/2: the emitted error
    ratios fall toward zero until the iterates saturate.
    """
    problem = scalar_ratio_problem(hi=10.0)
    x, y, trace = core.dinkelbach_solve(
        problem, x0=np.array([x0]), tol=0.0, max_iters=n_iters,
        options=SolverOptions(max_inner_iters=500, grad_tol=1e-13),
    )
    rows = []
    err_prev = None
    for rec in trace.records:
        err = abs(0.5 - rec.objective)
        ratio = float("nan") if err_prev is None else (
            err / err_prev if err_prev > 0 else 0.0)
        rows.append(TextbookRow(rec.iteration, rec.objective, rec.residual,
                                rec.objective, ratio))
        err_prev = err
    return rows


def fig_ratio_problem() -> RatioProblem:
    """x1 / ((x1-1)^2 + (x2-2)^2 + 1) over the box [0, 4]^2: concave
    over convex, so the unique stationary point is the global optimum."""
    term = RatioTerm(
        numerator=lambda x: x[0],
        denominator=lambda x: (x[0] - 1.0) ** 2 + (x[1] - 2.0) ** 2 + 1.0,
        numerator_gradient=lambda x: np.array([1.0, 0.0]),
        denominator_gradient=lambda x: np.array([2.0 * (x[0] - 1.0),
                                                 2.0 * (x[1] - 2.0)]),
    )
    return RatioProblem(terms=(term,), feasible_set=FeasibleSet.box([0.0, 0.0],
                                                                    [4.0, 4.0]))


def fig_ratio_fixture(x0=(4.0, 0.0), tol: float = 1e-12,
                      max_iters: int = 200) -> list[TextbookRow]:
    """Alternating solve of the two-dimensional example from a corner
    start; the objective climbs to (1 + sqrt(2)) / 2."""
    problem = fig_ratio_problem()
    ys: list[float] = []
    x, aux, trace = core.fp_solve(
        problem, x0=np.asarray(x0, dtype=float), tol=tol, max_iters=max_iters,
        options=SolverOptions(max_inner_iters=1000, grad_tol=1e-12),
        callback=lambda t, x, y, f: ys.append(float(y[0])),
    )
    rows = []
    for rec, y in zip(trace.records, ys):
        rows.append(TextbookRow(rec.iteration, rec.objective, rec.residual,
                                y, float("nan")))
    return rows
