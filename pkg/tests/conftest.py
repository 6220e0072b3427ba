"""Shared oracles for the test suite.

These deliberately avoid the library's solver code paths: grids,
golden-section search, and dense linear algebra only, so they stay
independent of what they check.
"""

import numpy as np
import pytest

from fpopt.power import SisoNetwork


def grid_oracle_2cell(net: SisoNetwork, n: int = 1001):
    """Exhaustive grid search of the two-link weighted sum rate."""
    ps = np.linspace(0.0, net.p_max, n)
    p1, p2 = np.meshgrid(ps, ps, indexing="ij")
    g = net.gains
    s1 = g[0, 0] * p1 / (g[0, 1] * p2 + net.noise)
    s2 = g[1, 1] * p2 / (g[1, 0] * p1 + net.noise)
    f = net.weights[0] * np.log1p(s1) + net.weights[1] * np.log1p(s2)
    k = int(np.argmax(f))
    return float(f.flat[k]), np.array([p1.flat[k], p2.flat[k]])


def grid_oracle_maxmin_2cell(net: SisoNetwork, n: int = 2001):
    """Exhaustive grid search of the two-link minimum SINR."""
    ps = np.linspace(0.0, net.p_max, n)
    p1, p2 = np.meshgrid(ps, ps, indexing="ij")
    g = net.gains
    s1 = g[0, 0] * p1 / (g[0, 1] * p2 + net.noise)
    s2 = g[1, 1] * p2 / (g[1, 0] * p1 + net.noise)
    f = np.minimum(s1, s2)
    k = int(np.argmax(f))
    return float(f.flat[k]), np.array([p1.flat[k], p2.flat[k]])


def golden_section_max(f, lo: float, hi: float, tol: float = 1e-13):
    """Golden-section search for a unimodal maximum on [lo, hi]."""
    phi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c, d = b - phi * (b - a), a + phi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol * max(1.0, hi - lo):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + phi * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def random_hpd(rng: np.random.Generator, n: int, jitter: float = 0.1):
    """Random Hermitian positive-definite matrix L L^H + jitter I."""
    L = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return L @ L.conj().T + jitter * np.eye(n)


def random_siso_network(rng: np.random.Generator, n_links: int,
                        p_max: float = 1.0) -> SisoNetwork:
    """Random interference network with O(1) gains."""
    g = rng.uniform(0.01, 1.0, size=(n_links, n_links))
    g[np.diag_indices(n_links)] = rng.uniform(0.5, 3.0, size=n_links)
    return SisoNetwork(gains=g, weights=rng.uniform(0.5, 2.0, size=n_links),
                       noise=rng.uniform(0.1, 1.0), p_max=p_max)


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
