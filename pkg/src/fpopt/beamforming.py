"""Weighted sum-rate transmit beamforming for a MIMO cellular downlink.

``channels[i, m, j]`` is the N x M channel from transmitter j to the
user receiving stream m of cell i; beamformers ``V[i, m]`` are length-M
complex vectors under a per-transmitter total-power budget.

Two solvers mirror the power-control pair: a direct method that
transforms each stream's SINR and solves the beamformer step by
projected gradient, and a closed-form method built on the sum-of-ratios
rewrite whose beamformer step is a regularized linear solve with the
regularizer (one dual variable per transmitter) found by bisection.

Internally streams are flattened to a single index k = i * S + m; the
hot evaluators are einsum contractions over that index.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import numerics
from .core import IterationTrace
from .exceptions import ConditioningError
from .numerics import SolverOptions

__all__ = [
    "MimoNetwork",
    "BfAuxState",
    "EtaSearchState",
    "stream_rate",
    "stream_sinr",
    "weighted_stream_rate",
    "wsr_gradient",
    "bf_residual",
    "default_beamformers",
    "project_beamformers",
    "eta_power",
    "bf_direct_solve",
    "bf_closed_form_solve",
]

#: bisection tolerance on the per-transmitter power mismatch, relative
#: to the budget
_ETA_POWER_TOL = 1e-10


@dataclass(frozen=True)
class MimoNetwork:
    """Cellular downlink with per-stream channels.

    channels: complex array (B, S, B, N, M) indexed by receiving stream
    (cell i, stream m) and transmitting cell j.
    """

    channels: np.ndarray
    weights: np.ndarray
    noise: float
    p_max: float

    def __post_init__(self) -> None:
        H = np.asarray(self.channels, dtype=complex)
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "channels", H)
        object.__setattr__(self, "weights", w)
        if H.ndim != 5 or H.shape[0] != H.shape[2]:
            raise ValueError("channels must have shape (B, S, B, N, M)")
        if w.shape != H.shape[:2]:
            raise ValueError("weights must have shape (B, S)")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        if self.noise <= 0:
            raise ValueError("noise power must be positive")
        if self.p_max <= 0:
            raise ValueError("power budget must be positive")

    @property
    def n_cells(self) -> int:
        return self.channels.shape[0]

    @property
    def n_streams(self) -> int:
        return self.channels.shape[1]

    @property
    def n_rx(self) -> int:
        return self.channels.shape[3]

    @property
    def n_tx(self) -> int:
        return self.channels.shape[4]


@dataclass
class BfAuxState:
    """Per-stream transform vectors y, the sum-of-ratios weights gamma
    (closed-form path), and the per-transmitter duals eta."""

    y: np.ndarray
    gamma: np.ndarray | None = None
    eta: np.ndarray | None = None


def _flat_channels(net: MimoNetwork) -> np.ndarray:
    """(K, B, N, M) view with the receiving stream flattened."""
    B, S = net.n_cells, net.n_streams
    return net.channels.reshape(B * S, B, net.n_rx, net.n_tx)


def _stream_vectors(V: np.ndarray, net: MimoNetwork) -> np.ndarray:
    """t[k, q] = H_{k, cell(q)} v_q, shape (K, K, N)."""
    Hf = _flat_channels(net)
    t = np.einsum("kjnm,jsm->kjsn", Hf, V)
    K = Hf.shape[0]
    return t.reshape(K, K, net.n_rx)


def _leave_out_cov(t: np.ndarray, noise: float):
    """Leave-own-stream-out covariances (K, N, N) and own signals (K, N)."""
    K, _, N = t.shape
    own = t[np.arange(K), np.arange(K)]
    full = noise * np.eye(N) + np.einsum("kqn,kql->knl", t, t.conj())
    leave = full - np.einsum("kn,kl->knl", own, own.conj())
    return full, leave, own


def stream_rate(V: np.ndarray, net: MimoNetwork) -> np.ndarray:
    """Per-stream rate log(1 + signal^H Phi^{-1} signal) with Phi the
    interference-plus-noise covariance of every other stream."""
    t = _stream_vectors(np.asarray(V, dtype=complex), net)
    _, leave, own = _leave_out_cov(t, net.noise)
    K = own.shape[0]
    rates = np.empty(K)
    for k in range(K):
        u = numerics.hpd_solve(leave[k], own[k])
        rates[k] = np.log1p(max(float(np.real(np.vdot(own[k], u))), 0.0))
    return rates.reshape(net.n_cells, net.n_streams)


def stream_sinr(V: np.ndarray, net: MimoNetwork) -> np.ndarray:
    """Per-stream SINR implied by the rate expression."""
    return np.expm1(stream_rate(V, net))


def weighted_stream_rate(V: np.ndarray, net: MimoNetwork) -> float:
    return float(np.sum(net.weights * stream_rate(V, net)))


def _mmse_vectors_flat(V: np.ndarray, net: MimoNetwork):
    """u[k] = Phi_k^{-1} (own signal of stream k), batched."""
    t = _stream_vectors(V, net)
    _, leave, own = _leave_out_cov(t, net.noise)
    u = np.linalg.solve(leave, own[..., None])[..., 0]
    return t, own, u


def _quadratic_terms(t, own, y, noise):
    """Surrogate SINRs u_k = 2 Re{y^H own} - y^H Phi_k y without
    forming covariances: W[k, q] = y_k^H t[k, q]."""
    W = np.einsum("kn,kqn->kq", y.conj(), t)
    diag = np.real(np.einsum("kk->k", W))
    cross = np.sum(np.abs(W) ** 2, axis=1) - np.abs(np.einsum("kk->k", W)) ** 2
    ynorm2 = np.sum(np.abs(y) ** 2, axis=1)
    u = 2.0 * diag - noise * ynorm2 - cross
    return u, W


def _interference_gradient(net, y, W, coef, V):
    """Common bilinear part of the gradients: for each stream q,
    coef_q a_qq - sum_{k != q} coef_k a_kq W[k, q] with
    a_kq = H_{k, cell(q)}^H y_k; returned in (B, S, M) layout."""
    Hf = _flat_channels(net)
    B, S = net.n_cells, net.n_streams
    K = B * S
    jmap = np.repeat(np.arange(B), S)
    A = np.einsum("kjnm,kn->kjm", Hf.conj(), y)       # a_k at every cell
    A_sel = A[:, jmap, :]                              # (K, K, M)
    own = A_sel[np.arange(K), np.arange(K)]
    Wdiag = np.einsum("kk->k", W)
    total = np.einsum("k,kqm,kq->qm", coef, A_sel, W)
    grad = coef[:, None] * own - (total - coef[:, None] * own * Wdiag[:, None])
    return grad.reshape(B, S, net.n_tx)


def wsr_gradient(V: np.ndarray, net: MimoNetwork) -> np.ndarray:
    """Ascent direction of the weighted sum rate (complex packing of
    the real-parameterization gradient)."""
    V = np.asarray(V, dtype=complex)
    t, own, u = _mmse_vectors_flat(V, net)
    gamma = np.real(np.einsum("kn,kn->k", own.conj(), u))
    coef = net.weights.reshape(-1) / (1.0 + gamma)
    W = np.einsum("kn,kqn->kq", u.conj(), t)
    return 2.0 * _interference_gradient(net, u, W, coef, V)


def project_beamformers(V: np.ndarray, net: MimoNetwork) -> np.ndarray:
    """Scale each transmitter's stack of beamformers onto its power ball."""
    out = V.copy()
    for i in range(net.n_cells):
        power = float(np.sum(np.abs(out[i]) ** 2))
        if power > net.p_max:
            out[i] *= np.sqrt(net.p_max / power)
    return out


def bf_residual(V: np.ndarray, net: MimoNetwork) -> float:
    """Projected-gradient residual of the weighted sum rate under the
    per-transmitter power constraints."""
    moved = project_beamformers(V + wsr_gradient(V, net), net)
    return float(np.linalg.norm(V - moved))


def default_beamformers(net: MimoNetwork) -> np.ndarray:
    """Equal power split across streams, each aimed along the dominant
    right singular direction of its own direct channel."""
    B, S, M = net.n_cells, net.n_streams, net.n_tx
    V = np.empty((B, S, M), dtype=complex)
    scale = np.sqrt(net.p_max / S)
    for i in range(B):
        for m in range(S):
            _, _, vh = np.linalg.svd(net.channels[i, m, i])
            V[i, m] = scale * vh[0].conj()
    return V


# ---------------------------------------------------------------------------
# direct method


def _surrogate_value(V, y, net) -> float:
    """Transformed weighted sum rate (per-stream SINR surrogates inside
    the logs) for fixed y."""
    t = _stream_vectors(V, net)
    K = t.shape[0]
    own = t[np.arange(K), np.arange(K)]
    u, _ = _quadratic_terms(t, own, y, net.noise)
    if np.any(u <= -1.0):
        return -np.inf
    return float(net.weights.reshape(-1) @ np.log1p(u))


def _surrogate_gradient(V, y, net) -> np.ndarray:
    t = _stream_vectors(V, net)
    K = t.shape[0]
    own = t[np.arange(K), np.arange(K)]
    u, W = _quadratic_terms(t, own, y, net.noise)
    coef = net.weights.reshape(-1) / (1.0 + u)
    return 2.0 * _interference_gradient(net, y, W, coef, V)


def bf_direct_solve(
    net: MimoNetwork,
    V0: np.ndarray | None = None,
    tol: float = 1e-8,
    max_iters: int = 500,
    options: SolverOptions | None = None,
    callback: Callable | None = None,
):
    """Alternate the closed-form per-stream auxiliary update with a
    projected-gradient beamformer step; the weighted sum rate is
    nondecreasing per iteration."""
    if V0 is None:
        V0 = default_beamformers(net)
    V = project_beamformers(np.asarray(V0, dtype=complex), net)
    opts = options or SolverOptions(max_inner_iters=200,
                                    grad_tol=min(1e-8, 0.1 * tol),
                                    initial_step=1.0 / max(net.p_max, 1.0))
    B, S, N = net.n_cells, net.n_streams, net.n_rx
    shape = V.shape
    t0 = time.perf_counter()
    trace = IterationTrace()
    f = weighted_stream_rate(V, net)
    trace.append(0, f, bf_residual(V, net), time.perf_counter() - t0)
    aux = None
    if callback is not None:
        callback(0, V.copy(), aux, f)
    for t in range(1, max_iters + 1):
        _, _, y = _mmse_vectors_flat(V, net)
        result = numerics.projected_gradient_maximize(
            lambda q: _surrogate_value(q.reshape(shape), y, net),
            lambda q: _surrogate_gradient(q.reshape(shape), y, net).reshape(-1),
            lambda q: project_beamformers(q.reshape(shape), net).reshape(-1),
            V.reshape(-1), opts)
        V = result.x.reshape(shape)
        aux = BfAuxState(y=y.reshape(B, S, N))
        f_new = weighted_stream_rate(V, net)
        res = bf_residual(V, net)
        trace.append(t, f_new, res, time.perf_counter() - t0)
        if callback is not None:
            callback(t, V.copy(), aux, f_new)
        done = abs(f_new - f) <= tol * (1.0 + abs(f_new)) and res <= 10.0 * tol
        f = f_new
        if done:
            break
    return V, aux, trace


# ---------------------------------------------------------------------------
# closed-form method


@dataclass
class EtaSearchState:
    """Fixed quantities of one beamformer step: per-transmitter
    quadratic forms L and per-stream right-hand sides b."""

    L: np.ndarray  # (B, M, M)
    b: np.ndarray  # (B, S, M)
    p_max: float


def eta_power(eta: float, i: int, state: EtaSearchState) -> float:
    """Power surplus sum_m ||v_im(eta)||^2 - P_max of transmitter i at
    dual value eta; strictly decreasing in eta.  Returns +inf when the
    shifted system is singular (unbounded beamformers)."""
    M = state.L.shape[1]
    A = state.L[i] + eta * np.eye(M)
    try:
        v = np.stack([numerics.hpd_solve(A, state.b[i, m])
                      for m in range(state.b.shape[1])])
    except ConditioningError:
        return np.inf
    return float(np.sum(np.abs(v) ** 2)) - state.p_max


def _closed_form_beamformer_step(y, gamma, net):
    """Solve the regularized beamformer update with per-transmitter
    duals found by bisection on the power surplus.

    ``y`` and ``gamma`` are in flat (K, N) / (K,) layout.
    """
    B, S, M = net.n_cells, net.n_streams, net.n_tx
    K = B * S
    Hf = _flat_channels(net)
    scale = np.sqrt(net.weights.reshape(-1) * (1.0 + gamma))
    A = np.einsum("kjnm,kn->kjm", Hf.conj(), y)        # a_k at every cell
    L = np.einsum("kjm,kjl->jml", A, A.conj())         # (B, M, M)
    jmap = np.repeat(np.arange(B), S)
    b = (scale[:, None] * A[np.arange(K), jmap]).reshape(B, S, M)
    state = EtaSearchState(L=L, b=b, p_max=net.p_max)
    V = np.empty((B, S, M), dtype=complex)
    eta = np.zeros(B)
    for i in range(B):
        if eta_power(0.0, i, state) <= 0.0:
            eta[i] = 0.0
        else:
            eta[i] = numerics.bisection_root(
                lambda e: eta_power(e, i, state), 0.0, 1.0,
                tol=1e-14 * max(1.0, net.p_max),
                ftol=_ETA_POWER_TOL * net.p_max)
        shifted = L[i] + eta[i] * np.eye(M)
        for m in range(S):
            V[i, m] = numerics.hpd_solve(shifted, b[i, m])
        power = float(np.sum(np.abs(V[i]) ** 2))
        if power > net.p_max:
            V[i] *= np.sqrt(net.p_max / power)
    return V, eta, state


def bf_closed_form_solve(
    net: MimoNetwork,
    V0: np.ndarray | None = None,
    tol: float = 1e-8,
    max_iters: int = 2000,
    callback: Callable | None = None,
):
    """Sum-of-ratios rewrite with closed-form cycles.

    Each cycle refreshes gamma with the current stream SINRs, solves
    the auxiliary vectors from the full (own stream included)
    covariance, and updates every beamformer through the regularized
    solve; the weighted sum rate is nondecreasing per cycle.
    """
    if V0 is None:
        V0 = default_beamformers(net)
    V = project_beamformers(np.asarray(V0, dtype=complex), net)
    B, S, N = net.n_cells, net.n_streams, net.n_rx
    t0 = time.perf_counter()
    trace = IterationTrace()
    f = weighted_stream_rate(V, net)
    trace.append(0, f, bf_residual(V, net), time.perf_counter() - t0)
    t_vec, own0, u0 = _mmse_vectors_flat(V, net)
    aux = BfAuxState(y=u0.reshape(B, S, N),
                     gamma=stream_sinr(V, net), eta=np.zeros(B))
    if callback is not None:
        callback(0, V.copy(), aux, f)
    for t in range(1, max_iters + 1):
        t_vec = _stream_vectors(V, net)
        full, _, own = _leave_out_cov(t_vec, net.noise)
        u = np.linalg.solve(full, own[..., None])[..., 0]
        # SINR from the matrix inversion identity: s/(1-s) with
        # s = own^H full^{-1} own
        s = np.real(np.einsum("kn,kn->k", own.conj(), u))
        gamma = s / np.maximum(1.0 - s, 1e-300)
        scale = np.sqrt(net.weights.reshape(-1) * (1.0 + gamma))
        y = scale[:, None] * u
        V, eta, _ = _closed_form_beamformer_step(y, gamma, net)
        aux = BfAuxState(y=y.reshape(B, S, N),
                         gamma=gamma.reshape(B, S), eta=eta)
        f_new = weighted_stream_rate(V, net)
        res = bf_residual(V, net)
        trace.append(t, f_new, res, time.perf_counter() - t0)
        if callback is not None:
            callback(t, V.copy(), aux, f_new)
        done = abs(f_new - f) <= tol * (1.0 + abs(f_new)) and res <= 10.0 * tol
        f = f_new
        if done:
            break
    return V, aux, trace
