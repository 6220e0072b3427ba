"""Energy-efficiency solvers against the golden-section oracle and the
nested-transform identities."""

import numpy as np
import pytest

from fpopt import energy as ee
from fpopt.core import qt_optimal_y
from fpopt.energy import (
    BroadcastNetwork,
    SingleLink,
    broadcast_rates,
    ee_nested_solve,
    ee_objective,
    ee_single_link_dinkelbach,
    ee_single_link_qt,
    nested_surrogate,
)

from conftest import golden_section_max


REFERENCE = SingleLink(gain=100.0, noise=1.0, p_max=10.0, p_on=1.0)


def golden_ee(link: SingleLink):
    return golden_section_max(lambda p: ee_objective(p, link), 0.0, link.p_max)


class TestObjective:
    def test_examples(self):
        link = SingleLink(gain=1.0, noise=1.0, p_max=2.0, p_on=1.0)
        assert ee_objective(0.0, link) == 0.0
        assert ee_objective(1.0, link) == pytest.approx(np.log(2.0) / 2.0)
        net = BroadcastNetwork(channels=np.ones((2, 1, 2), dtype=complex),
                               noise=1.0, p_max=1.0, p_on=1.0)
        assert ee_objective(np.zeros((2, 2), dtype=complex), net) == 0.0


class TestSingleLink:
    def test_reference_fixture_matches_golden(self):
        pstar, fstar = golden_ee(REFERENCE)
        pq, trq = ee_single_link_qt(REFERENCE, tol=1e-12)
        pd, trd = ee_single_link_dinkelbach(REFERENCE, tol=1e-12)
        assert trq.final_objective == pytest.approx(fstar, rel=1e-8)
        assert trd.final_objective == pytest.approx(fstar, rel=1e-8)

    def test_dinkelbach_needs_no_more_iterations(self):
        _, trq = ee_single_link_qt(REFERENCE, tol=1e-12)
        _, trd = ee_single_link_dinkelbach(REFERENCE, tol=1e-12)
        assert len(trd) <= len(trq)

    def test_random_links_agree(self, rng):
        for _ in range(30):
            link = SingleLink(gain=10 ** rng.uniform(-1, 2),
                              noise=10 ** rng.uniform(-1, 1),
                              p_max=10 ** rng.uniform(-1, 1),
                              p_on=10 ** rng.uniform(-2, 1))
            _, fstar = golden_ee(link)
            _, trq = ee_single_link_qt(link, tol=1e-13)
            _, trd = ee_single_link_dinkelbach(link, tol=1e-13)
            assert trq.final_objective == pytest.approx(fstar, rel=1e-8)
            assert trd.final_objective == pytest.approx(trq.final_objective,
                                                        rel=1e-8)
            assert len(trd) <= len(trq)

    def test_dead_channel(self):
        link = SingleLink(gain=0.0, noise=1.0, p_max=5.0, p_on=1.0)
        p, trace = ee_single_link_qt(link)
        assert p == 0.0
        assert trace.final_objective == 0.0

    def test_huge_on_power_pushes_to_budget(self):
        link = SingleLink(gain=100.0, noise=1.0, p_max=10.0, p_on=1e6)
        pstar, fstar = golden_ee(link)
        assert pstar == pytest.approx(10.0, abs=1e-6)
        p, trace = ee_single_link_qt(link, tol=1e-14, max_iters=3000)
        assert p == pytest.approx(10.0, rel=1e-6)

    def test_monotone_traces(self):
        for solver in (ee_single_link_qt, ee_single_link_dinkelbach):
            _, trace = solver(REFERENCE, p0=0.01, tol=1e-13)
            assert np.all(np.diff(trace.objectives) >= -1e-12)


class TestNested:
    def v_c_network(self, rng) -> BroadcastNetwork:
        H = (rng.standard_normal((3, 2, 3)) + 1j * rng.standard_normal((3, 2, 3)))
        H *= np.sqrt(0.5e-12)
        return BroadcastNetwork(channels=H, noise=1e-13, p_max=0.1259,
                                p_on=0.00316)

    def test_reduces_to_single_link(self):
        gain = 10.0
        net = BroadcastNetwork(channels=np.array([[[np.sqrt(gain)]]],
                                                 dtype=complex),
                               noise=1.0, p_max=0.1259, p_on=0.00316)
        link = SingleLink(gain=gain, noise=1.0, p_max=0.1259, p_on=0.00316)
        _, fstar = golden_ee(link)
        V, aux, trace = ee_nested_solve(net, tol=1e-12, max_iters=2000)
        assert trace.final_objective == pytest.approx(fstar, rel=1e-6)

    def test_matched_filter_composition(self, rng):
        # one receiver, several transmit antennas: best direction is the
        # matched filter and the power solves the scalar problem on |h|^2
        h = rng.standard_normal((1, 3)) + 1j * rng.standard_normal((1, 3))
        net = BroadcastNetwork(channels=h[None, :, :].reshape(1, 1, 3),
                               noise=1.0, p_max=2.0, p_on=0.5)
        link = SingleLink(gain=float(np.linalg.norm(h) ** 2), noise=1.0,
                          p_max=2.0, p_on=0.5)
        _, fstar = golden_ee(link)
        V, aux, trace = ee_nested_solve(net, tol=1e-12, max_iters=2000)
        assert trace.final_objective == pytest.approx(fstar, rel=1e-6)

    def test_monotone_and_improving_over_seeds(self):
        for seed in range(6):
            rng = np.random.default_rng(seed)
            net = self.v_c_network(rng)
            V0 = (rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3)))
            V0 *= np.sqrt(net.p_max / np.sum(np.abs(V0) ** 2))
            V, aux, trace = ee_nested_solve(net, V0, tol=1e-8, max_iters=150)
            diffs = np.diff(trace.objectives)
            assert np.all(diffs >= -1e-8 * np.abs(trace.objectives[1:]))
            assert trace.final_objective > trace.objectives[0]

    def test_tight_surrogate_identity(self, rng):
        # with both auxiliary blocks at their closed-form optimum the
        # doubly transformed objective recovers the efficiency exactly
        net = self.v_c_network(rng)
        for _ in range(20):
            V = (rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3)))
            V *= np.sqrt(net.p_max / np.sum(np.abs(V) ** 2)) * rng.uniform(0.2, 1.0)
            z = ee._mmse_receivers(V, net)
            rates = broadcast_rates(V, net)
            power = float(np.sum(np.abs(V) ** 2))
            y = qt_optimal_y(float(rates.sum()), power + net.p_on)
            val = nested_surrogate(V, y, z, net)
            ref = ee_objective(V, net)
            assert val == pytest.approx(ref, rel=1e-9)

    def test_outer_update_identity(self, rng):
        net = self.v_c_network(rng)
        V = (rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3)))
        V *= np.sqrt(net.p_max / np.sum(np.abs(V) ** 2))
        rates = broadcast_rates(V, net)
        power = float(np.sum(np.abs(V) ** 2))
        expected = np.sqrt(rates.sum()) / (power + net.p_on)
        assert qt_optimal_y(float(rates.sum()), power + net.p_on) == \
            pytest.approx(expected, rel=1e-14)

    def test_inner_update_matches_dense_solve(self, rng):
        from fpopt import numerics
        net = self.v_c_network(rng)
        V = (rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3)))
        V *= np.sqrt(net.p_max / np.sum(np.abs(V) ** 2))
        z = ee._mmse_receivers(V, net)
        for m in range(net.n_receivers):
            t = net.channels[m] @ V.T
            cov = net.noise * np.eye(net.n_rx)
            for k in range(net.n_receivers):
                if k != m:
                    cov = cov + np.outer(t[:, k], t[:, k].conj())
            z_dense = numerics.hpd_solve(cov, t[:, m])
            np.testing.assert_allclose(z[m], z_dense, rtol=1e-9, atol=1e-15)

    def test_rejects_zero_start(self, rng):
        net = self.v_c_network(rng)
        with pytest.raises(ValueError):
            ee_nested_solve(net, np.zeros((3, 3), dtype=complex))
