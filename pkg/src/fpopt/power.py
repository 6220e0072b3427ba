"""Weighted sum-rate power control for interfering single-antenna links.

Channel gains are linear power gains: ``gains[i, j]`` is the gain from
transmitter j into receiver i (so the diagonal carries the direct
links).  Rates use the natural logarithm and all powers are in watts.

Solvers:

* :func:`pc_direct_solve` transforms each SINR in place and alternates
  a closed-form auxiliary update with a projected-gradient power step.
* :func:`pc_closed_form_solve` first rewrites the sum-log objective in
  a sum-of-ratios form with per-link weights ``gamma`` (equal to the
  SINRs at the optimum), after which every update is closed form.
* :func:`pc_fixed_point_solve` iterates the first-order condition
  directly; convergence is not guaranteed and is reported as a flag.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import core, numerics
from .core import Combiner, FeasibleSet, IterationTrace, OuterFunction, RatioProblem, RatioTerm
from .numerics import SolverOptions

__all__ = [
    "SisoNetwork",
    "PcAuxState",
    "sinr",
    "weighted_sum_rate",
    "foc_residual",
    "pc_direct_solve",
    "pc_closed_form_solve",
    "pc_fixed_point_solve",
    "pc_multiband_solve",
    "pc_utility_solve",
    "pc_maxmin_solve",
    "fixed_point_update",
    "closed_form_power_update",
]

#: power floor used inside the fixed-point update to avoid division by
#: a transmitter that has shut off completely
_POWER_FLOOR_FACTOR = 1e-12

#: relative floor for d/dp sqrt(p) inside inner gradient evaluations;
#: caps the one-sided derivative at p == 0 at a large finite value
_SQRT_FLOOR_FACTOR = 1e-16


@dataclass(frozen=True)
class SisoNetwork:
    """Interfering single-antenna links sharing one or more bands.

    ``gains`` has shape (B, B) for a flat channel or (T, B, B) with one
    matrix per band; ``weights`` are the per-link rate priorities.
    """

    gains: np.ndarray
    weights: np.ndarray
    noise: float
    p_max: float

    def __post_init__(self) -> None:
        gains = np.asarray(self.gains, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "gains", gains)
        object.__setattr__(self, "weights", weights)
        if gains.ndim not in (2, 3) or gains.shape[-1] != gains.shape[-2]:
            raise ValueError("gains must be (B, B) or (T, B, B)")
        if np.any(gains < 0):
            raise ValueError("gains must be nonnegative")
        diags = np.diagonal(gains, axis1=-2, axis2=-1)
        if np.any(diags <= 0):
            raise ValueError("direct-link gains must be positive")
        if weights.shape != (gains.shape[-1],):
            raise ValueError("weights must have one entry per link")
        if np.any(weights < 0):
            raise ValueError("weights must be nonnegative")
        if self.noise <= 0:
            raise ValueError("noise power must be positive")
        if self.p_max <= 0:
            raise ValueError("power budget must be positive")

    @property
    def n_links(self) -> int:
        return self.gains.shape[-1]

    @property
    def n_bands(self) -> int:
        return self.gains.shape[0] if self.gains.ndim == 3 else 1

    def band_gains(self) -> np.ndarray:
        """Gains with an explicit leading band axis, shape (T, B, B)."""
        return self.gains if self.gains.ndim == 3 else self.gains[None, :, :]

    def default_power(self) -> np.ndarray:
        """Half the budget per link, split evenly across bands."""
        if self.n_bands == 1:
            return np.full(self.n_links, 0.5 * self.p_max)
        return np.full((self.n_links, self.n_bands),
                       0.5 * self.p_max / self.n_bands)


@dataclass
class PcAuxState:
    """Transform variables y and, for the closed-form path, the
    sum-of-ratios weights gamma (equal to the SINRs once updated)."""

    y: np.ndarray
    gamma: np.ndarray | None = None


def _band_power(p: np.ndarray, net: SisoNetwork) -> np.ndarray:
    """Powers with an explicit band axis, shape (T, B)."""
    p = np.asarray(p, dtype=float)
    if net.n_bands == 1:
        if p.shape != (net.n_links,):
            raise ValueError(f"power vector must have shape ({net.n_links},)")
        return p[None, :]
    if p.shape != (net.n_links, net.n_bands):
        raise ValueError(
            f"power matrix must have shape ({net.n_links}, {net.n_bands})")
    return p.T


def sinr(p: np.ndarray, net: SisoNetwork) -> np.ndarray:
    """Per-link SINR; shape (B,) flat or (B, T) per band."""
    pb = _band_power(p, net)
    gains = net.band_gains()
    received = np.einsum("tij,tj->ti", gains, pb)
    own = np.diagonal(gains, axis1=1, axis2=2) * pb
    out = own / (received - own + net.noise)
    return out[0] if net.n_bands == 1 else out.T


def weighted_sum_rate(p: np.ndarray, net: SisoNetwork) -> float:
    """sum_i w_i log(1 + SINR_i), averaged over bands when T > 1."""
    s = sinr(p, net)
    rates = np.log1p(s)
    if net.n_bands > 1:
        rates = rates.mean(axis=1)
    return float(net.weights @ rates)


def _wsr_gradient(p: np.ndarray, net: SisoNetwork) -> np.ndarray:
    """Gradient of the weighted sum rate in the power coordinates."""
    pb = _band_power(p, net)
    gains = net.band_gains()
    T = gains.shape[0]
    diag = np.diagonal(gains, axis1=1, axis2=2)
    received = np.einsum("tij,tj->ti", gains, pb)
    denom = received - diag * pb + net.noise       # interference + noise
    total = received + net.noise                   # signal + interference + noise
    w = net.weights
    grad = np.empty_like(pb)
    for t in range(T):
        # own-rate benefit and interference harm of raising p_k
        own = w * diag[t] / total[t]
        harm = (w * diag[t] * pb[t] / (total[t] * denom[t])) @ gains[t]
        harm -= w * diag[t] * pb[t] / (total[t] * denom[t]) * diag[t]
        grad[t] = own - harm
    if net.n_bands > 1:
        grad /= net.n_bands
    return grad[0] if net.n_bands == 1 else grad.T


def _power_set(net: SisoNetwork) -> FeasibleSet:
    if net.n_bands == 1:
        return FeasibleSet.box(np.zeros(net.n_links),
                               np.full(net.n_links, net.p_max))
    groups = [np.arange(i * net.n_bands, (i + 1) * net.n_bands)
              for i in range(net.n_links)]
    return FeasibleSet.simplex_sum(groups, np.full(net.n_links, net.p_max))


def foc_residual(p: np.ndarray, net: SisoNetwork) -> float:
    """Projected-gradient residual of the weighted sum rate at p; zero
    exactly at stationary points of the constrained problem."""
    g = _wsr_gradient(p, net)
    fs = _power_set(net)
    p = np.asarray(p, dtype=float)
    moved = fs.project((p + g).reshape(-1)).reshape(p.shape)
    return float(np.linalg.norm(p - moved))


def _aux_update(p: np.ndarray, net: SisoNetwork) -> np.ndarray:
    """y_i = sqrt(g_ii p_i) / (interference_i + noise), per band."""
    pb = _band_power(p, net)
    gains = net.band_gains()
    diag = np.diagonal(gains, axis1=1, axis2=2)
    received = np.einsum("tij,tj->ti", gains, pb)
    denom = received - diag * pb + net.noise
    y = np.sqrt(diag * pb) / denom
    return y[0] if net.n_bands == 1 else y.T


def _transformed_rate_terms(p, y, net):
    """Per-link surrogate SINR u_i = 2 y_i sqrt(g_ii p_i) - y_i^2 (I_i + noise)."""
    pb = _band_power(p, net)
    yb = y[None, :] if net.n_bands == 1 else np.asarray(y).T
    gains = net.band_gains()
    diag = np.diagonal(gains, axis1=1, axis2=2)
    received = np.einsum("tij,tj->ti", gains, pb)
    denom = received - diag * pb + net.noise
    u = 2.0 * yb * np.sqrt(diag * pb) - yb**2 * denom
    return u, pb, yb, gains, diag


def _surrogate_wsr(p, y, net) -> float:
    """Weighted sum rate with every SINR replaced by its surrogate."""
    u, *_ = _transformed_rate_terms(p, y, net)
    if np.any(u <= -1.0):
        return -np.inf
    rates = np.log1p(u)
    if net.n_bands > 1:
        rates = rates.mean(axis=0)
    else:
        rates = rates[0]
    return float(net.weights @ rates)


def _surrogate_wsr_gradient(p, y, net) -> np.ndarray:
    u, pb, yb, gains, diag = _transformed_rate_terms(p, y, net)
    w = net.weights
    T = gains.shape[0]
    floor = _SQRT_FLOOR_FACTOR * net.p_max
    grad = np.empty_like(pb)
    for t in range(T):
        coef = w / (1.0 + u[t])
        own = coef * yb[t] * np.sqrt(diag[t] / np.maximum(pb[t], floor))
        harm = (coef * yb[t]**2) @ gains[t] - coef * yb[t]**2 * diag[t]
        grad[t] = own - harm
    if net.n_bands > 1:
        grad /= net.n_bands
    return grad[0] if net.n_bands == 1 else grad.T


def _run_alternating(net, p0, tol, max_iters, step, callback):
    """Common outer loop: trace handling, stopping rule, convergence
    gate on objective change plus stationarity residual."""
    p = np.asarray(p0, dtype=float).copy()
    t0 = time.perf_counter()
    trace = IterationTrace()
    f = weighted_sum_rate(p, net)
    trace.append(0, f, foc_residual(p, net), time.perf_counter() - t0)
    aux = None
    if callback is not None:
        callback(0, p.copy(), aux, f)
    for t in range(1, max_iters + 1):
        p, aux = step(p)
        f_new = weighted_sum_rate(p, net)
        res = foc_residual(p, net)
        trace.append(t, f_new, res, time.perf_counter() - t0)
        if callback is not None:
            callback(t, p.copy(), aux, f_new)
        done = abs(f_new - f) <= tol * (1.0 + abs(f_new)) and res <= 10.0 * tol
        f = f_new
        if done:
            break
    return p, aux, trace


def pc_direct_solve(
    net: SisoNetwork,
    p0: np.ndarray | None = None,
    tol: float = 1e-8,
    max_iters: int = 1000,
    options: SolverOptions | None = None,
    callback: Callable | None = None,
):
    """Alternate the closed-form auxiliary update with a projected
    gradient maximization of the transformed weighted sum rate over the
    power box.  The weighted sum rate is nondecreasing per iteration."""
    if net.n_bands != 1:
        raise ValueError("use pc_multiband_solve for networks with T > 1 bands")
    if p0 is None:
        p0 = net.default_power()
    fs = _power_set(net)
    opts = options or SolverOptions(grad_tol=min(1e-8, 0.1 * tol))

    def step(p):
        y = _aux_update(p, net)
        result = numerics.projected_gradient_maximize(
            lambda q: _surrogate_wsr(q, y, net),
            lambda q: _surrogate_wsr_gradient(q, y, net),
            fs.project, p, opts)
        return result.x, PcAuxState(y=y)

    return _run_alternating(net, p0, tol, max_iters, step, callback)


def closed_form_power_update(p, gamma, y, net: SisoNetwork) -> np.ndarray:
    """Power step of the closed-form method (single band):
    p_i = clamp( y_i^2 w_i (1+gamma_i) g_ii / (sum_j y_j^2 g_ji)^2 )."""
    gains = net.gains
    diag = np.diag(gains)
    denom = (y**2) @ gains  # entry i: sum_j y_j^2 g_{j,i}
    p_new = y**2 * net.weights * (1.0 + gamma) * diag / denom**2
    return np.clip(p_new, 0.0, net.p_max)


def _cf_aux_update(p, gamma, net: SisoNetwork) -> np.ndarray:
    """y_i = sqrt(w_i (1+gamma_i) g_ii p_i) / (sum_j g_ij p_j + noise)."""
    gains = net.gains
    diag = np.diag(gains)
    total = gains @ p + net.noise
    return np.sqrt(net.weights * (1.0 + gamma) * diag * p) / total


def pc_closed_form_solve(
    net: SisoNetwork,
    p0: np.ndarray | None = None,
    tol: float = 1e-8,
    max_iters: int = 2000,
    callback: Callable | None = None,
):
    """Sum-of-ratios reformulation with closed-form cycles.

    Each cycle refreshes gamma with the current SINRs, recomputes y in
    closed form, and solves the separable concave power step exactly;
    the weighted sum rate is nondecreasing per cycle.
    """
    if net.n_bands != 1:
        raise ValueError("closed-form updates cover the single-band problem")
    if p0 is None:
        p0 = net.default_power()
    gamma0 = sinr(np.asarray(p0, dtype=float), net)
    state = {"gamma": gamma0}

    def step(p):
        gamma = sinr(p, net)
        y = _cf_aux_update(p, gamma, net)
        p_new = closed_form_power_update(p, gamma, y, net)
        state["gamma"] = gamma
        return p_new, PcAuxState(y=y, gamma=gamma)

    p, aux, trace = _run_alternating(net, p0, tol, max_iters, step, callback)
    if aux is None:
        aux = PcAuxState(y=_cf_aux_update(p, gamma0, net), gamma=gamma0)
    return p, aux, trace


def fixed_point_update(p: np.ndarray, net: SisoNetwork) -> np.ndarray:
    """One step of the first-order-condition fixed point:
    p_i = min(P_max, T1_i / T2_i) with the interference prices T2 held
    at the current powers."""
    gains = net.gains
    diag = np.diag(gains)
    w = net.weights
    gamma = sinr(p, net)
    p_safe = np.maximum(p, _POWER_FLOOR_FACTOR * net.p_max)
    t1 = w * gamma / (1.0 + gamma)
    prices = w * gamma**2 / ((1.0 + gamma) * diag * p_safe)
    t2 = prices @ gains - prices * diag
    with np.errstate(divide="ignore"):
        ratio = np.where(t2 > 0, t1 / np.maximum(t2, 1e-300), np.inf)
    return np.minimum(ratio, net.p_max)


def pc_fixed_point_solve(
    net: SisoNetwork,
    p0: np.ndarray | None = None,
    max_iters: int = 2000,
    tol: float = 1e-10,
):
    """Iterate :func:`fixed_point_update` from a strictly positive
    start.  Non-convergence within ``max_iters`` is an expected outcome
    reported through the flag, not an error."""
    if net.n_bands != 1:
        raise ValueError("fixed-point iteration covers the single-band problem")
    if p0 is None:
        p0 = net.default_power()
    p = np.asarray(p0, dtype=float).copy()
    if np.any(p <= 0):
        raise ValueError("fixed-point iteration needs a strictly positive start")
    t0 = time.perf_counter()
    trace = IterationTrace()
    trace.append(0, weighted_sum_rate(p, net), foc_residual(p, net),
                 time.perf_counter() - t0)
    converged = False
    for t in range(1, max_iters + 1):
        p_new = fixed_point_update(p, net)
        trace.append(t, weighted_sum_rate(p_new, net), foc_residual(p_new, net),
                     time.perf_counter() - t0)
        converged = bool(np.max(np.abs(p_new - p)) <= tol * net.p_max)
        p = p_new
        if converged:
            break
    return p, trace, converged


def pc_multiband_solve(
    net: SisoNetwork,
    p0: np.ndarray | None = None,
    tol: float = 1e-8,
    max_iters: int = 1000,
    options: SolverOptions | None = None,
    callback: Callable | None = None,
):
    """Multi-band variant of :func:`pc_direct_solve`: the auxiliary
    update is unchanged per band and the power step runs under a
    per-transmitter total-power budget."""
    if net.n_bands < 2:
        raise ValueError("multiband solve expects a network with T > 1 bands")
    if p0 is None:
        p0 = net.default_power()
    p0 = np.asarray(p0, dtype=float)
    if np.any(p0.sum(axis=1) > net.p_max * (1 + 1e-12)):
        raise ValueError("starting powers exceed the per-transmitter budget")
    fs = _power_set(net)
    opts = options or SolverOptions(grad_tol=min(1e-8, 0.1 * tol))
    shape = p0.shape

    def project(q):
        return fs.project(q.reshape(-1)).reshape(shape)

    def step(p):
        y = _aux_update(p, net)
        result = numerics.projected_gradient_maximize(
            lambda q: _surrogate_wsr(q, y, net),
            lambda q: _surrogate_wsr_gradient(q, y, net),
            project, p, opts)
        return result.x, PcAuxState(y=y)

    p, aux, trace = _run_alternating(net, p0, tol, max_iters, step, callback)
    return p, trace


def pc_utility_solve(
    net: SisoNetwork,
    utilities: Sequence[OuterFunction],
    p0: np.ndarray | None = None,
    tol: float = 1e-8,
    max_iters: int = 1000,
    options: SolverOptions | None = None,
    callback: Callable | None = None,
):
    """General utility maximization sum_i U_i(R_i) for nondecreasing
    concave U_i, via the same SINR surrogate inside each rate.  Link
    priorities, if any, belong inside the utilities."""
    if net.n_bands != 1:
        raise ValueError("utility solve covers the single-band problem")
    if len(utilities) != net.n_links:
        raise ValueError("one utility per link is required")
    if p0 is None:
        p0 = net.default_power()
    fs = _power_set(net)
    opts = options or SolverOptions(grad_tol=min(1e-8, 0.1 * tol))

    def sum_utility(p):
        rates = np.log1p(sinr(p, net))
        return float(sum(u.value(r) for u, r in zip(utilities, rates)))

    def surrogate(p, y):
        u, *_ = _transformed_rate_terms(p, y, net)
        if np.any(u[0] <= -1.0):
            return -np.inf
        q = np.log1p(u[0])
        return float(sum(uf.value(v) for uf, v in zip(utilities, q)))

    def surrogate_grad(p, y):
        u, pb, yb, gains, diag = _transformed_rate_terms(p, y, net)
        q = np.log1p(u[0])
        outer = np.array([uf.derivative(v) for uf, v in zip(utilities, q)])
        coef = outer / (1.0 + u[0])
        floor = _SQRT_FLOOR_FACTOR * net.p_max
        own = coef * yb[0] * np.sqrt(diag[0] / np.maximum(pb[0], floor))
        harm = (coef * yb[0]**2) @ gains[0] - coef * yb[0]**2 * diag[0]
        return own - harm

    def residual(p):
        # at the tight auxiliary point the surrogate gradient equals the
        # gradient of the original utility objective (envelope equality)
        g = surrogate_grad(p, _aux_update(p, net))
        return float(np.linalg.norm(p - fs.project(p + g)))

    p = np.asarray(p0, dtype=float).copy()
    t0 = time.perf_counter()
    trace = IterationTrace()
    f = sum_utility(p)
    trace.append(0, f, residual(p), time.perf_counter() - t0)
    aux = None
    if callback is not None:
        callback(0, p.copy(), aux, f)
    for t in range(1, max_iters + 1):
        y = _aux_update(p, net)
        result = numerics.projected_gradient_maximize(
            lambda q: surrogate(q, y), lambda q: surrogate_grad(q, y),
            fs.project, p, opts)
        p = result.x
        aux = PcAuxState(y=y)
        f_new = sum_utility(p)
        res = residual(p)
        trace.append(t, f_new, res, time.perf_counter() - t0)
        if callback is not None:
            callback(t, p.copy(), aux, f_new)
        done = abs(f_new - f) <= tol * (1.0 + abs(f_new)) and res <= 10.0 * tol
        f = f_new
        if done:
            break
    return p, trace


def pc_maxmin_solve(
    net: SisoNetwork,
    p0: np.ndarray | None = None,
    tol: float = 1e-8,
    max_iters: int = 500,
    options: SolverOptions | None = None,
):
    """Maximize the minimum SINR across links (monotone-equivalent to
    the minimum rate) through the generic max-min driver; for these
    linear-over-affine ratios the stationary point is globally optimal."""
    if net.n_bands != 1:
        raise ValueError("max-min solve covers the single-band problem")
    if p0 is None:
        p0 = net.default_power()
    p0 = np.asarray(p0, dtype=float)
    if np.any(p0 <= 0):
        raise ValueError("max-min solve needs a strictly positive start")
    gains = net.gains
    diag = np.diag(gains)
    B = net.n_links

    def make_term(i):
        off = gains[i].copy()
        off[i] = 0.0
        return RatioTerm(
            numerator=lambda p, i=i: diag[i] * p[i],
            denominator=lambda p, off=off: float(off @ p) + net.noise,
            numerator_gradient=lambda p, i=i: diag[i] * np.eye(B)[i],
            denominator_gradient=lambda p, off=off: off,
        )

    problem = RatioProblem(
        terms=tuple(make_term(i) for i in range(B)),
        feasible_set=FeasibleSet.box(np.zeros(B), np.full(B, net.p_max)),
        combiner=Combiner.MAX_MIN,
    )
    opts = options or SolverOptions(max_inner_iters=4000,
                                    grad_tol=min(1e-9, 0.01 * tol),
                                    initial_step=net.p_max)
    p, aux, trace = core.fp_solve(problem, x0=p0, tol=tol,
                                  max_iters=max_iters, options=opts)
    return p, trace
