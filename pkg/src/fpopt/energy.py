"""Energy-efficiency maximization: achieved rate divided by total
consumed power (transmit power plus a constant on-power).

The single-link problem is a one-ratio concave-convex program solved
globally either by the quadratic surrogate or by the classic parametric
iteration.  The multi-receiver broadcast problem nests a second
transform: the outer ratio decouples rate sum from power, and each
per-receiver SINR inside the rate sum is transformed again so the
beamformer step becomes concave.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import numerics
from .core import IterationTrace, qt_optimal_y
from .numerics import SolverOptions

__all__ = [
    "SingleLink",
    "BroadcastNetwork",
    "EeAuxState",
    "ee_objective",
    "ee_single_link_qt",
    "ee_single_link_dinkelbach",
    "ee_nested_solve",
    "broadcast_rates",
    "nested_surrogate",
]


@dataclass(frozen=True)
class SingleLink:
    """Isolated link: channel power gain, noise power, transmit budget,
    and the constant on-power, all linear."""

    gain: float
    noise: float
    p_max: float
    p_on: float

    def __post_init__(self) -> None:
        if self.gain < 0:
            raise ValueError("gain must be nonnegative")
        if self.noise <= 0 or self.p_max <= 0 or self.p_on <= 0:
            raise ValueError("noise, p_max, and p_on must be positive")

    def rate(self, p: float) -> float:
        return float(np.log1p(self.gain * p / self.noise))


@dataclass(frozen=True)
class BroadcastNetwork:
    """One multi-antenna sender, one stream per receiver.

    channels[m] is the N x M channel to receiver m; the sender's total
    transmit power is capped by p_max and idles at p_on.
    """

    channels: np.ndarray
    noise: float
    p_max: float
    p_on: float

    def __post_init__(self) -> None:
        H = np.asarray(self.channels, dtype=complex)
        object.__setattr__(self, "channels", H)
        if H.ndim != 3:
            raise ValueError("channels must have shape (M_receivers, N, M_tx)")
        if self.noise <= 0 or self.p_max <= 0 or self.p_on <= 0:
            raise ValueError("noise, p_max, and p_on must be positive")

    @property
    def n_receivers(self) -> int:
        return self.channels.shape[0]

    @property
    def n_rx(self) -> int:
        return self.channels.shape[1]

    @property
    def n_tx(self) -> int:
        return self.channels.shape[2]


@dataclass
class EeAuxState:
    """Outer ratio variable and, for the broadcast case, the inner
    per-receiver transform vectors."""

    y_outer: float
    z: np.ndarray | None = None


def _receive_vectors(V: np.ndarray, net: BroadcastNetwork) -> np.ndarray:
    """t[m, k] = H_m v_k, shape (M, M, N)."""
    return np.einsum("mna,ka->mkn", net.channels, V)


def _leave_out_cov(t: np.ndarray, noise: float):
    M, _, N = t.shape
    own = t[np.arange(M), np.arange(M)]
    cov = noise * np.eye(N) + np.einsum("mkn,mkl->mnl", t, t.conj()) \
        - np.einsum("mn,ml->mnl", own, own.conj())
    return cov, own


def broadcast_rates(V: np.ndarray, net: BroadcastNetwork) -> np.ndarray:
    """Per-receiver rates under single-stream interference."""
    cov, own = _leave_out_cov(_receive_vectors(np.asarray(V, dtype=complex), net),
                              net.noise)
    u = np.linalg.solve(cov, own[..., None])[..., 0]
    s = np.maximum(np.real(np.einsum("mn,mn->m", own.conj(), u)), 0.0)
    return np.log1p(s)


def ee_objective(x, net) -> float:
    """Rate over total power: scalar transmit power for a single link,
    a (M, M_tx) beamformer stack for the broadcast network."""
    if isinstance(net, SingleLink):
        p = float(x)
        return net.rate(p) / (p + net.p_on)
    V = np.asarray(x, dtype=complex)
    power = float(np.sum(np.abs(V) ** 2))
    return float(broadcast_rates(V, net).sum()) / (power + net.p_on)


def _maximize_concave_1d(derivative: Callable[[float], float], lo: float,
                         hi: float, tol: float = 1e-14) -> float:
    """Maximizer of a concave function on [lo, hi] given its
    (nonincreasing) derivative, by bisecting the derivative sign."""
    if derivative(hi) >= 0.0:
        return hi
    if derivative(lo) <= 0.0:
        return lo
    span = hi - lo
    while hi - lo > tol * span:
        mid = 0.5 * (lo + hi)
        if derivative(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _run_single_link(link, p0, tol, max_iters, inner_step):
    if link.gain == 0.0:
        # dead channel: efficiency is identically zero, spend nothing
        trace = IterationTrace()
        trace.append(0, 0.0, 0.0, 0.0)
        return 0.0, trace
    p = 0.5 * link.p_max if p0 is None else float(p0)
    if not 0.0 <= p <= link.p_max:
        raise ValueError("starting power outside [0, p_max]")
    t0 = time.perf_counter()
    trace = IterationTrace()
    f = ee_objective(p, link)
    trace.append(0, f, abs(_ee_derivative_mapped(p, link)), time.perf_counter() - t0)
    for t in range(1, max_iters + 1):
        p = inner_step(p)
        f_new = ee_objective(p, link)
        trace.append(t, f_new, abs(_ee_derivative_mapped(p, link)),
                     time.perf_counter() - t0)
        done = abs(f_new - f) <= tol * (1.0 + abs(f_new))
        f = f_new
        if done:
            break
    return p, trace


def _ee_derivative_mapped(p, link):
    """Box-projected derivative of the efficiency ratio at p."""
    total = p + link.p_on
    snr_slope = link.gain / (link.noise + link.gain * p)
    d = (snr_slope * total - link.rate(p)) / total**2
    return p - min(max(p + d, 0.0), link.p_max)


def ee_single_link_qt(link: SingleLink, p0: float | None = None,
                      tol: float = 1e-10, max_iters: int = 500):
    """Quadratic-surrogate iteration for the single link: closed-form
    auxiliary update, then an exact one-dimensional concave power step
    (derivative bisection).  Converges to the global optimum."""

    def step(p):
        y = qt_optimal_y(link.rate(p), p + link.p_on)
        if y == 0.0:
            return p

        def derivative(q):
            r = link.rate(q)
            if r <= 0.0:
                return np.inf  # one-sided derivative of sqrt(rate) at 0
            slope = link.gain / (link.noise + link.gain * q)
            return y * slope / np.sqrt(r) - y * y

        return _maximize_concave_1d(derivative, 0.0, link.p_max)

    return _run_single_link(link, p0, tol, max_iters, step)


def ee_single_link_dinkelbach(link: SingleLink, p0: float | None = None,
                              tol: float = 1e-10, max_iters: int = 500):
    """Classic parametric iteration for the single link: maximize
    rate(p) - y (p + p_on) exactly, then refresh y with the achieved
    efficiency.  Converges superlinearly to the same global optimum."""

    def step(p):
        y = ee_objective(p, link)

        def derivative(q):
            return link.gain / (link.noise + link.gain * q) - y

        return _maximize_concave_1d(derivative, 0.0, link.p_max)

    return _run_single_link(link, p0, tol, max_iters, step)


# ---------------------------------------------------------------------------
# broadcast case


def _inner_terms(V, z, net):
    """Surrogate SINRs u_m = 2 Re{z^H t_m} - z^H Phi_m z with fixed z;
    also returns W[m, k] = z_m^H H_m v_k for gradient reuse."""
    t = _receive_vectors(V, net)
    W = np.einsum("mn,mkn->mk", z.conj(), t)
    diag = np.real(np.einsum("mm->m", W))
    cross = np.sum(np.abs(W) ** 2, axis=1) - np.abs(np.einsum("mm->m", W)) ** 2
    znorm2 = np.sum(np.abs(z) ** 2, axis=1)
    u = 2.0 * diag - net.noise * znorm2 - cross
    return u, W


def nested_surrogate(V: np.ndarray, y: float, z: np.ndarray,
                     net: BroadcastNetwork) -> float:
    """Doubly transformed efficiency 2 y sqrt(sum log(1+u_m)) - y^2 (power + p_on).

    Returns -inf when a surrogate log argument or the rate sum goes
    nonpositive, so line searches reject such steps.
    """
    u, _ = _inner_terms(V, z, net)
    if np.any(u <= -1.0):
        return -np.inf
    s = float(np.log1p(u).sum())
    if s < 0.0:
        return -np.inf
    power = float(np.sum(np.abs(V) ** 2))
    return 2.0 * y * np.sqrt(s) - y * y * (power + net.p_on)


def _nested_surrogate_gradient(V, y, z, net):
    u, W = _inner_terms(V, z, net)
    s = float(np.log1p(u).sum())
    coef = (y / np.sqrt(s)) / (1.0 + u)
    A = np.einsum("mna,mn->ma", net.channels.conj(), z)  # a_m = H_m^H z_m
    M = net.n_receivers
    own = coef[:, None] * A
    Wdiag = np.einsum("mm->m", W)
    total = np.einsum("k,ka,km->ma", coef, A, W)
    grad = own - (total - own * Wdiag[:, None]) - y * y * V
    return 2.0 * grad


def _project_total_ball(V, p_max):
    power = float(np.sum(np.abs(V) ** 2))
    if power > p_max:
        return V * np.sqrt(p_max / power)
    return V


def ee_nested_solve(
    net: BroadcastNetwork,
    V0: np.ndarray | None = None,
    tol: float = 1e-9,
    max_iters: int = 500,
    options: SolverOptions | None = None,
    callback: Callable | None = None,
):
    """Nested transform for broadcast energy efficiency.

    Per cycle: refresh the inner per-receiver vectors z (closed form),
    refresh the outer ratio variable y (closed form), then raise the
    doubly transformed objective over the beamformers by projected
    gradient under the total-power ball.  The efficiency is
    nondecreasing per cycle and a stationary point is reached.

    The classic parametric (single-transform) alternative is
    intentionally unavailable here: with multiple receivers its
    surrogate is no longer concave in the beamformers, so its inner
    step cannot be solved reliably.
    """
    if V0 is None:
        V0 = _default_broadcast(net)
    V = _project_total_ball(np.asarray(V0, dtype=complex).copy(), net.p_max)
    if np.sum(np.abs(V) ** 2) == 0.0:
        raise ValueError("starting beamformers must not all be zero")
    opts = options or SolverOptions(max_inner_iters=120,
                                    grad_tol=max(0.1 * tol, 1e-9),
                                    initial_step=max(net.p_max, 1.0))
    t0 = time.perf_counter()
    trace = IterationTrace()
    f = ee_objective(V, net)
    trace.append(0, f, np.inf, time.perf_counter() - t0)
    aux = EeAuxState(y_outer=0.0)
    if callback is not None:
        callback(0, V.copy(), aux, f)
    for t in range(1, max_iters + 1):
        z = _mmse_receivers(V, net)
        rates = broadcast_rates(V, net)
        power = float(np.sum(np.abs(V) ** 2))
        y = qt_optimal_y(float(rates.sum()), power + net.p_on)
        result = numerics.projected_gradient_maximize(
            lambda W: nested_surrogate(W.reshape(V.shape), y, z, net),
            lambda W: _nested_surrogate_gradient(W.reshape(V.shape), y, z, net).reshape(-1),
            lambda W: _project_total_ball(W.reshape(V.shape), net.p_max).reshape(-1),
            V.reshape(-1), opts)
        V = result.x.reshape(V.shape)
        aux = EeAuxState(y_outer=y, z=z)
        f_new = ee_objective(V, net)
        trace.append(t, f_new, result.residual, time.perf_counter() - t0)
        if callback is not None:
            callback(t, V.copy(), aux, f_new)
        done = abs(f_new - f) <= tol * (1.0 + abs(f_new))
        f = f_new
        if done:
            break
    return V, aux, trace


def _mmse_receivers(V, net):
    """Inner transform update: z_m from the leave-own-out covariance."""
    cov, own = _leave_out_cov(_receive_vectors(V, net), net.noise)
    return np.linalg.solve(cov, own[..., None])[..., 0]


def _default_broadcast(net: BroadcastNetwork) -> np.ndarray:
    """Equal power split, matched to the dominant direction of each
    receiver's channel."""
    M = net.n_receivers
    V = np.empty((M, net.n_tx), dtype=complex)
    scale = np.sqrt(net.p_max / M)
    for m in range(M):
        _, _, vh = np.linalg.svd(net.channels[m])
        V[m] = scale * vh[0].conj()
    return V
