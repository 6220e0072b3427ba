"""Shared numerical kernels.

Gradient convention for complex variables: a real-valued objective
f(v) is treated as a function on the real/imaginary parts, and gradient
callables return the real-parameterization ascent direction packed as a
complex array, i.e. 2 * df/d(conj(v)).  With the real inner product
Re<a, b> this makes every formula below identical for real and complex
decision vectors.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .exceptions import BracketError, ConditioningError

__all__ = [
    "SolverOptions",
    "PgResult",
    "make_rng",
    "project_box",
    "project_group_ball",
    "project_simplex_cap",
    "hpd_solve",
    "bisection_root",
    "projected_gradient_maximize",
    "projected_subgradient_max_min",
]

#: step size below which Armijo backtracking gives up (relative to the
#: initial step)
_MIN_STEP_FACTOR = 1e-20

#: bracket expansion cap for bisection (see the dual-variable search)
_BRACKET_CAP = 2.0**60


def make_rng(seed: int) -> np.random.Generator:
    """Seeded random stream (PCG64); the same seed yields the same
    sample sequence on every platform."""
    return np.random.default_rng(np.uint64(seed))


def real_inner(a: np.ndarray, b: np.ndarray) -> float:
    """Real inner product Re<a, b> over flattened arrays."""
    return float(np.real(np.vdot(a, b)))


@dataclass(frozen=True)
class SolverOptions:
    """Options for the first-order inner solvers."""

    max_inner_iters: int = 500
    grad_tol: float = 1e-8
    armijo_c: float = 1e-4
    backtrack_factor: float = 0.5
    initial_step: float = 1.0

    def __post_init__(self) -> None:
        if self.max_inner_iters <= 0:
            raise ValueError("max_inner_iters must be positive")
        if self.grad_tol <= 0:
            raise ValueError("grad_tol must be positive")
        if not 0.0 < self.armijo_c < 1.0:
            raise ValueError("armijo_c must lie in (0, 1)")
        if not 0.0 < self.backtrack_factor < 1.0:
            raise ValueError("backtrack_factor must lie in (0, 1)")
        if self.initial_step <= 0:
            raise ValueError("initial_step must be positive")


class PgResult(NamedTuple):
    x: np.ndarray
    residual: float
    converged: bool
    value: float


def project_box(x: np.ndarray, lo, hi) -> np.ndarray:
    """Elementwise clamp onto [lo, hi]; idempotent."""
    return np.clip(x, lo, hi)


def project_group_ball(
    v: np.ndarray, groups: Sequence[np.ndarray], radii: Sequence[float]
) -> np.ndarray:
    """Scale each index group of ``v`` onto its Euclidean ball.

    Groups must partition the flattened coordinates; a group with norm
    below its radius is left untouched, so the map is idempotent.
    """
    out = np.array(v, copy=True)
    flat = out.reshape(-1)
    for idx, radius in zip(groups, radii):
        norm = np.linalg.norm(flat[idx])
        # roundoff slack keeps the map bit-for-bit idempotent
        if norm > radius * (1.0 + 1e-12):
            flat[idx] *= radius / norm
    return out


def project_simplex_cap(x: np.ndarray, budget: float) -> np.ndarray:
    """Project onto {x >= 0, sum(x) <= budget}.

    Clips negatives first; if the clipped point still exceeds the
    budget, applies the sorted-threshold simplex projection.
    """
    y = np.maximum(x, 0.0)
    total = y.sum()
    # the slack absorbs roundoff so re-projecting a projected point is a
    # bit-for-bit no-op
    if total <= budget * (1.0 + 1e-12):
        return y
    # threshold theta with sum(max(x - theta, 0)) == budget
    u = np.sort(x)[::-1]
    css = np.cumsum(u) - budget
    k = np.arange(1, x.size + 1)
    valid = u - css / k > 0
    rho = np.nonzero(valid)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(x - theta, 0.0)


def hpd_solve(B: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Solve B x = a for Hermitian positive-definite B via Cholesky."""
    B = np.asarray(B)
    try:
        factor = cho_factor(B, lower=True, check_finite=False)
    except LinAlgError as exc:
        raise ConditioningError(
            f"Cholesky factorization failed for a {B.shape[0]}x{B.shape[0]} matrix"
        ) from exc
    return cho_solve(factor, np.asarray(a), check_finite=False)


def bisection_root(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    tol: float,
    ftol: float | None = None,
) -> float:
    """Root of a monotone scalar function by bisection.

    If ``f(lo)`` is already on the far side of the crossing (the root
    lies at or below ``lo``), returns ``lo``.  When ``f(hi)`` has the
    same sign as ``f(lo)``, the upper end is doubled until the signs
    differ, capped at 2**60.  Stops once the bracket is shorter than
    ``tol`` or, when ``ftol`` is given, once |f(mid)| <= ftol.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    flo = f(lo)
    if flo == 0.0:
        return lo
    fhi = f(hi)
    if np.sign(fhi) == np.sign(flo):
        # crossing below lo (monotone toward the lo side)?
        if abs(fhi) < abs(flo) or np.isinf(flo):
            while np.sign(fhi) == np.sign(flo):
                hi = 2.0 * hi if hi > 0 else lo + max(tol, 1.0)
                if hi > _BRACKET_CAP:
                    raise BracketError(
                        f"no sign change in [{lo}, {_BRACKET_CAP}]"
                    )
                fhi = f(hi)
        else:
            return lo
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fmid = f(mid)
        if ftol is not None and abs(fmid) <= ftol:
            return mid
        if fmid == 0.0:
            return mid
        if np.sign(fmid) == np.sign(flo):
            lo, flo = mid, fmid
        else:
            hi, fhi = mid, fmid
    return 0.5 * (lo + hi)


def projected_gradient_maximize(
    value: Callable[[np.ndarray], float],
    gradient: Callable[[np.ndarray], np.ndarray],
    project: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    options: SolverOptions | None = None,
) -> PgResult:
    """Maximize a concave function over a convex set by projected
    gradient ascent with Armijo backtracking.

    The objective never decreases across iterations.  The returned
    residual is ||x - project(x + s g)|| / s at the final step size s;
    convergence means it fell below ``grad_tol``.  If no improving step
    exists above the minimum step size, the best iterate is returned
    with ``converged=False``.
    """
    opts = options or SolverOptions()
    x = project(np.asarray(x0).copy())
    f = value(x)
    if not np.isfinite(f):
        raise ValueError("objective is not finite at the starting point")
    step = opts.initial_step
    min_step = opts.initial_step * _MIN_STEP_FACTOR
    g = gradient(x)
    residual = np.inf
    converged = False
    for _ in range(opts.max_inner_iters):
        moved = project(x + step * g) - x
        residual = float(np.linalg.norm(moved)) / step
        if residual <= opts.grad_tol:
            converged = True
            break
        # Armijo backtracking along the projection arc
        trial = step
        improved = False
        while trial >= min_step:
            x_new = project(x + trial * g)
            d = x_new - x
            f_new = value(x_new)
            if np.isfinite(f_new) and f_new >= f + opts.armijo_c * real_inner(g, d):
                improved = True
                break
            trial *= opts.backtrack_factor
        if not improved:
            break
        g_new = gradient(x_new)
        # spectral (Barzilai-Borwein) step: inverse of the local curvature
        # along the last move, so steps neither creep nor overshoot
        dx = x_new - x
        neg_curv = -real_inner(dx, g_new - g)
        if neg_curv > 0:
            step = real_inner(dx, dx) / neg_curv
            step = min(max(step, 1e-12 * opts.initial_step), 1e12 * opts.initial_step)
        else:
            step = trial / opts.backtrack_factor
        x, f, g = x_new, f_new, g_new
    return PgResult(x, residual, converged, f)


def projected_subgradient_max_min(
    component_values: Callable[[np.ndarray], np.ndarray],
    component_gradients: Callable[[np.ndarray], np.ndarray],
    project: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    options: SolverOptions | None = None,
) -> PgResult:
    """Maximize min_m f_m(x) over a convex set for concave f_m.

    Projected subgradient ascent on the pointwise minimum.  Stationarity
    is measured with the average gradient of the numerically tied terms;
    trial directions also include an average over every term within a
    step-scaled window of the minimum (so the iterate can slide along a
    kink) and the steepest single active term.  Only improving steps are
    accepted, so the min value is monotone, and the best iterate seen,
    which includes the starting point, is returned.
    """
    opts = options or SolverOptions()
    x = project(np.asarray(x0, dtype=float).copy())
    vals = np.asarray(component_values(x))
    fmin = float(vals.min())
    best_x, best_f = x.copy(), fmin
    step = opts.initial_step
    min_step = opts.initial_step * _MIN_STEP_FACTOR
    residual = np.inf
    converged = False
    for _ in range(opts.max_inner_iters):
        grads = np.asarray(component_gradients(x))
        gscale = max(float(np.max(np.linalg.norm(grads, axis=-1))), 1e-300)
        tied = vals <= fmin + 1e-9 * (1.0 + abs(fmin))
        g_tied = grads[tied].mean(axis=0)
        moved = project(x + step * g_tied) - x
        residual = float(np.linalg.norm(moved)) / step
        if residual <= opts.grad_tol:
            converged = True
            break
        window = vals <= fmin + 2.0 * step * gscale
        candidates = [grads[window].mean(axis=0), g_tied,
                      grads[int(np.argmin(vals))]]
        improved = False
        while step >= min_step and not improved:
            for g in candidates:
                x_new = project(x + step * g)
                vals_new = np.asarray(component_values(x_new))
                f_new = float(vals_new.min())
                if f_new > fmin:
                    improved = True
                    break
            if not improved:
                step *= opts.backtrack_factor
        if not improved:
            break
        x, vals, fmin = x_new, vals_new, f_new
        if fmin > best_f:
            best_x, best_f = x.copy(), fmin
        step /= opts.backtrack_factor
    if fmin < best_f:
        x, fmin = best_x, best_f
    return PgResult(x, residual, converged, fmin)
