"""Beamforming solvers: analytic single-user oracle, structural
identities of the update formulas, and KKT checks."""

import numpy as np
import pytest

from fpopt import beamforming as bf
from fpopt import numerics
from fpopt.beamforming import (
    EtaSearchState,
    MimoNetwork,
    bf_closed_form_solve,
    bf_direct_solve,
    default_beamformers,
    eta_power,
    project_beamformers,
    stream_rate,
    stream_sinr,
    weighted_stream_rate,
    wsr_gradient,
)
from fpopt.power import SisoNetwork, sinr as siso_sinr

from conftest import random_hpd


def random_mimo(rng, B=2, S=2, N=2, M=2, noise=0.5, p_max=2.0) -> MimoNetwork:
    H = (rng.standard_normal((B, S, B, N, M))
         + 1j * rng.standard_normal((B, S, B, N, M))) / np.sqrt(2.0)
    return MimoNetwork(channels=H, weights=np.ones((B, S)), noise=noise,
                       p_max=p_max)


def random_feasible(rng, net) -> np.ndarray:
    V = (rng.standard_normal((net.n_cells, net.n_streams, net.n_tx))
         + 1j * rng.standard_normal((net.n_cells, net.n_streams, net.n_tx)))
    return project_beamformers(0.5 * V, net)


def miso_network(rng, M=2, p_max=4.0) -> tuple[MimoNetwork, np.ndarray]:
    h = (rng.standard_normal(M) + 1j * rng.standard_normal(M)) / np.sqrt(2.0)
    net = MimoNetwork(channels=h.reshape(1, 1, 1, 1, M),
                      weights=np.ones((1, 1)), noise=1.0, p_max=p_max)
    return net, h


class TestStreamRate:
    def test_scalar_reduces_to_siso(self, rng):
        for _ in range(1000):
            B = int(rng.integers(1, 4))
            h = (rng.standard_normal((B, B)) + 1j * rng.standard_normal((B, B)))
            p = rng.uniform(0.05, 2.0, size=B)
            noise = rng.uniform(0.1, 2.0)
            net = MimoNetwork(channels=h.reshape(B, 1, B, 1, 1),
                              weights=np.ones((B, 1)), noise=noise, p_max=4.0)
            V = np.sqrt(p).reshape(B, 1, 1).astype(complex)
            snet = SisoNetwork(gains=np.abs(h) ** 2, weights=np.ones(B),
                               noise=noise, p_max=4.0)
            np.testing.assert_allclose(
                stream_rate(V, net).reshape(-1),
                np.log1p(siso_sinr(p, snet)), rtol=1e-12)

    def test_zero_beamformers(self, rng):
        net = random_mimo(rng)
        V = np.zeros((2, 2, 2), dtype=complex)
        np.testing.assert_allclose(stream_rate(V, net), 0.0)

    def test_orthogonal_channels_interference_free(self):
        # two streams on orthogonal rows: no cross coupling
        H = np.zeros((1, 2, 1, 2, 2), dtype=complex)
        H[0, 0, 0] = np.array([[1.0, 0.0], [0.0, 0.0]])
        H[0, 1, 0] = np.array([[0.0, 0.0], [0.0, 1.0]])
        net = MimoNetwork(channels=H, weights=np.ones((1, 2)), noise=1.0,
                          p_max=2.0)
        V = np.zeros((1, 2, 2), dtype=complex)
        V[0, 0] = [1.0, 0.0]
        V[0, 1] = [0.0, 1.0]
        np.testing.assert_allclose(stream_rate(V, net),
                                   [[np.log(2.0), np.log(2.0)]], rtol=1e-12)


class TestGradients:
    def test_wsr_gradient_finite_difference(self, rng):
        net = random_mimo(rng)
        V = random_feasible(rng, net)
        g = wsr_gradient(V, net)
        h = 1e-6
        for idx in ((0, 0, 0), (1, 1, 1)):
            for delta, part in ((h, "re"), (1j * h, "im")):
                Vp = V.copy()
                Vp[idx] += delta
                Vm = V.copy()
                Vm[idx] -= delta
                fd = (weighted_stream_rate(Vp, net)
                      - weighted_stream_rate(Vm, net)) / (2 * h)
                got = g[idx].real if part == "re" else g[idx].imag
                assert got == pytest.approx(fd, rel=1e-5, abs=1e-8)

    def test_surrogate_gradient_finite_difference(self, rng):
        net = random_mimo(rng)
        V = random_feasible(rng, net)
        _, _, y = bf._mmse_vectors_flat(V, net)
        g = bf._surrogate_gradient(V, y, net)
        h = 1e-6
        for idx in ((0, 1, 0), (1, 0, 1)):
            for delta, part in ((h, "re"), (1j * h, "im")):
                Vp = V.copy()
                Vp[idx] += delta
                Vm = V.copy()
                Vm[idx] -= delta
                fd = (bf._surrogate_value(Vp, y, net)
                      - bf._surrogate_value(Vm, y, net)) / (2 * h)
                got = g[idx].real if part == "re" else g[idx].imag
                assert got == pytest.approx(fd, rel=1e-5, abs=1e-8)


class TestDirect:
    def test_miso_matched_filter(self, rng):
        net, h = miso_network(rng)
        target = np.log1p(net.p_max * np.linalg.norm(h) ** 2 / net.noise)
        V, aux, trace = bf_direct_solve(net, tol=1e-10, max_iters=200)
        assert trace.final_objective == pytest.approx(target, rel=1e-6)
        # direction matches the conjugate channel up to phase
        cos = abs(np.vdot(V[0, 0], h.conj()))
        cos /= np.linalg.norm(V[0, 0]) * np.linalg.norm(h)
        assert cos == pytest.approx(1.0, abs=1e-6)

    def test_scalar_link_full_power(self, rng):
        net = MimoNetwork(channels=np.array(1.3 + 0.4j).reshape(1, 1, 1, 1, 1),
                          weights=np.ones((1, 1)), noise=1.0, p_max=2.0)
        V, aux, trace = bf_direct_solve(net, tol=1e-10)
        assert abs(V[0, 0, 0]) ** 2 == pytest.approx(2.0, rel=1e-9)

    def test_zero_channel_degenerate(self, rng):
        net = MimoNetwork(channels=np.zeros((1, 1, 1, 1, 2), dtype=complex),
                          weights=np.ones((1, 1)), noise=1.0, p_max=1.0)
        V0 = np.full((1, 1, 2), 2.0 + 0.0j)
        V, aux, trace = bf_direct_solve(net, V0, tol=1e-10, max_iters=50)
        assert trace.final_objective == 0.0
        assert np.sum(np.abs(V) ** 2) <= net.p_max * (1 + 1e-9)

    def test_monotone(self, rng):
        for _ in range(5):
            net = random_mimo(rng)
            V0 = random_feasible(rng, net)
            V, aux, trace = bf_direct_solve(net, V0, tol=1e-7, max_iters=300)
            diffs = np.diff(trace.objectives)
            assert np.all(diffs >= -1e-8 * np.abs(trace.objectives[1:]))


class TestClosedForm:
    def test_miso_matches_direct(self, rng):
        net, h = miso_network(rng)
        target = np.log1p(net.p_max * np.linalg.norm(h) ** 2 / net.noise)
        V, aux, trace = bf_closed_form_solve(net, tol=1e-10, max_iters=500)
        assert trace.final_objective == pytest.approx(target, rel=1e-6)
        # the active budget is met to high relative accuracy
        power = float(np.sum(np.abs(V) ** 2))
        assert abs(power - net.p_max) <= 1e-8 * net.p_max

    def test_huge_budget_zero_dual(self, rng):
        net0 = random_mimo(rng, p_max=1e9, noise=1.0)
        V, aux, trace = bf_closed_form_solve(net0, tol=1e-6, max_iters=50)
        assert np.all(aux.eta >= 0.0)
        assert np.any(aux.eta == 0.0)
        assert np.sum(np.abs(V) ** 2) < net0.p_max

    def test_gamma_equals_stream_sinr(self, rng):
        net = random_mimo(rng)
        V0 = random_feasible(rng, net)
        captured = {}

        def grab(t, V, aux, f):
            if t == 1:
                captured["gamma"] = aux.gamma
                captured["V0"] = V0

        bf_closed_form_solve(net, V0, tol=1e-6, max_iters=1, callback=grab)
        np.testing.assert_allclose(captured["gamma"], stream_sinr(V0, net),
                                   rtol=1e-10)

    def test_y_update_matches_dense_reconstruction(self, rng):
        # the auxiliary solve uses the full covariance (own stream
        # included), unlike the leave-own-out direct update
        net = random_mimo(rng)
        V = random_feasible(rng, net)
        gamma = stream_sinr(V, net).reshape(-1)
        t = bf._stream_vectors(V, net)
        K = t.shape[0]
        own = t[np.arange(K), np.arange(K)]
        scale = np.sqrt(net.weights.reshape(-1) * (1.0 + gamma))
        for k in range(K):
            cov = net.noise * np.eye(net.n_rx)
            for q in range(K):
                cov = cov + np.outer(t[k, q], t[k, q].conj())
            y_dense = numerics.hpd_solve(cov, scale[k] * own[k])
            full, leave, own2 = bf._leave_out_cov(t, net.noise)
            y_lib = np.linalg.solve(full[k], scale[k] * own2[k])
            np.testing.assert_allclose(y_lib, y_dense, rtol=1e-9, atol=1e-12)
            # and differs from the leave-own-out solve in general
            y_leave = np.linalg.solve(leave[k], own2[k])
            assert not np.allclose(y_lib, y_leave)

    def test_kkt_at_convergence(self, rng):
        net = random_mimo(rng)
        V, aux, trace = bf_closed_form_solve(net, tol=1e-9, max_iters=4000)
        gamma = aux.gamma.reshape(-1)
        y = aux.y.reshape(-1, net.n_rx)
        Hf = bf._flat_channels(net)
        K = y.shape[0]
        jmap = np.repeat(np.arange(net.n_cells), net.n_streams)
        scale = np.sqrt(net.weights.reshape(-1) * (1.0 + gamma))
        A = np.einsum("kjnm,kn->kjm", Hf.conj(), y)
        L = np.einsum("kjm,kjl->jml", A, A.conj())
        for i in range(net.n_cells):
            for m in range(net.n_streams):
                k = i * net.n_streams + m
                b = scale[k] * A[k, i]
                lhs = (L[i] + aux.eta[i] * np.eye(net.n_tx)) @ V[i, m]
                assert np.linalg.norm(lhs - b) <= 1e-7 * max(1.0, np.linalg.norm(b))
            slack = net.p_max - float(np.sum(np.abs(V[i]) ** 2))
            assert aux.eta[i] * slack <= 1e-7 * net.p_max

    def test_monotone(self, rng):
        for _ in range(5):
            net = random_mimo(rng)
            V0 = random_feasible(rng, net)
            V, aux, trace = bf_closed_form_solve(net, V0, tol=1e-7,
                                                 max_iters=3000)
            diffs = np.diff(trace.objectives)
            assert np.all(diffs >= -1e-8 * np.abs(trace.objectives[1:]))


class TestEtaSearch:
    def random_state(self, rng, B=1, S=2, M=3, p_max=1.0) -> EtaSearchState:
        L = np.stack([random_hpd(rng, M, jitter=0.5) for _ in range(B)])
        b = rng.standard_normal((B, S, M)) + 1j * rng.standard_normal((B, S, M))
        return EtaSearchState(L=L, b=b, p_max=p_max)

    def test_monotone_decreasing(self, rng):
        state = self.random_state(rng)
        etas = np.linspace(0.0, 20.0, 100)
        values = [eta_power(e, 0, state) for e in etas]
        assert np.all(np.diff(values) < 0)

    def test_limits(self, rng):
        state = self.random_state(rng)
        assert eta_power(1e12, 0, state) == pytest.approx(-state.p_max)
        # slack budget at eta = 0 stays nonpositive
        state_big = EtaSearchState(L=state.L, b=state.b, p_max=1e12)
        assert eta_power(0.0, 0, state_big) <= 0.0

    def test_bisection_meets_budget(self, rng):
        for _ in range(20):
            state = self.random_state(rng, p_max=0.5)
            if eta_power(0.0, 0, state) <= 0.0:
                continue
            eta = numerics.bisection_root(
                lambda e: eta_power(e, 0, state), 0.0, 1.0,
                tol=1e-14, ftol=1e-10 * state.p_max)
            # direct power-sum evaluation at the returned dual
            surplus = eta_power(eta, 0, state)
            assert abs(surplus) <= 1e-8 * state.p_max

    def test_singular_at_zero_handled(self, rng):
        # rank-one L: unshifted system is singular, surplus is infinite
        a = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        L = np.outer(a, a.conj())[None, :, :]
        b = (rng.standard_normal((1, 1, 3))
             + 1j * rng.standard_normal((1, 1, 3)))
        state = EtaSearchState(L=L, b=b, p_max=1.0)
        assert eta_power(0.0, 0, state) == np.inf
        eta = numerics.bisection_root(lambda e: eta_power(e, 0, state),
                                      0.0, 1.0, tol=1e-13, ftol=1e-10)
        assert abs(eta_power(eta, 0, state)) <= 1e-8
