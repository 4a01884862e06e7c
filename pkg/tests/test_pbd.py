import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gstars.pbd import (
    DomainError,
    chebyshev_bound,
    pbd_pmf,
    total_instability,
    upper_bound_curve,
    variance_decomposition,
    within_variability,
)
from oracles import pbd_pmf_enumerate

probs = st.integers(1, 60).flatmap(lambda L: arrays(np.float64, L, elements=st.floats(0, 1)))


class TestPmf:
    def test_binomial_half(self):
        np.testing.assert_allclose(pbd_pmf([0.5, 0.5]), [0.25, 0.5, 0.25])

    def test_all_ones_point_mass(self):
        f = pbd_pmf(np.ones(7))
        np.testing.assert_array_equal(f, np.eye(8)[7])

    def test_three_trials_enumeration(self):
        p = [0.2, 0.7, 0.9]
        np.testing.assert_allclose(pbd_pmf(p), pbd_pmf_enumerate(p), atol=1e-15)

    @pytest.mark.parametrize("bad", [[-0.1, 0.5], [0.5, 1.2], [np.nan]])
    def test_domain_error(self, bad):
        with pytest.raises(DomainError):
            pbd_pmf(bad)

    def test_enumeration_up_to_12(self, rng):
        for L in range(1, 13):
            p = rng.random(L)
            np.testing.assert_allclose(pbd_pmf(p), pbd_pmf_enumerate(p), atol=1e-12, rtol=0)

    @given(probs)
    def test_moments(self, p):
        f = pbd_pmf(p)
        y = np.arange(f.size)
        mean = f @ y
        var = f @ (y - mean) ** 2
        assert abs(f.sum() - 1) < 1e-12
        assert abs(mean - p.sum()) < 1e-10
        L, pbar = p.size, p.mean()
        assert abs(var - np.sum(p * (1 - p))) < 1e-10
        assert abs(var - (L * pbar * (1 - pbar) - L * p.var())) < 1e-10


class TestDecomposition:
    def test_homogeneous(self):
        d = variance_decomposition(np.full(10, 0.3))
        assert d.within_term < 1e-14
        assert d.total == pytest.approx(d.mean_term, abs=1e-14)

    def test_zero_one(self):
        d = variance_decomposition([0.0, 1.0])
        assert (d.total, d.mean_term, d.within_term) == (0.0, 0.5, 0.5)

    def test_identity_random(self, rng):
        d = variance_decomposition(rng.random(100))
        assert abs(d.total - (d.mean_term - d.within_term)) < 1e-12


class TestCurves:
    def test_upper_bound_half(self):
        np.testing.assert_allclose(upper_bound_curve(np.full(6, 0.5)), [1.0])

    @pytest.mark.parametrize("v", [0.0, 1.0])
    def test_upper_bound_degenerate(self, v):
        np.testing.assert_allclose(upper_bound_curve(np.full(6, v)), [0.0])

    def test_homogeneous_within_zero(self):
        assert within_variability(np.full(5, 0.4))[0] == 0

    def test_zero_one_column(self):
        t = np.array([0.0, 1.0])
        assert within_variability(t)[0] == 1.0
        assert upper_bound_curve(t)[0] == 1.0
        assert total_instability(t)[0] == 0.0

    @given(st.integers(1, 40), st.integers(1, 8), st.integers(1, 25), st.integers(0, 2 ** 31 - 1))
    def test_column_ordering_and_identity(self, L, K, N, seed):
        rng = np.random.default_rng(seed)
        t = rng.integers(0, N + 1, size=(L, K)) / N
        D, Dub, Delta = total_instability(t), upper_bound_curve(t), within_variability(t)
        assert np.all(Delta >= 0) and np.all(Delta <= Dub + 1e-15) and np.all(Dub <= 1)
        np.testing.assert_allclose(D, Dub - Delta, atol=1e-12, rtol=0)


class TestChebyshev:
    def test_value(self):
        assert chebyshev_bound(780, 0.05) == pytest.approx(0.128205, rel=1e-5)

    def test_vanishes_for_large_eps(self):
        assert chebyshev_bound(10, 1e6) < 1e-12

    @pytest.mark.parametrize("eps", [0.0, -1.0])
    def test_domain(self, eps):
        with pytest.raises(DomainError):
            chebyshev_bound(10, eps)

    def test_monte_carlo(self, rng):
        L, eps = 50, 0.1
        p = rng.random(L)
        ybar = (rng.random((100_000, L)) < p).mean(axis=1)
        freq = np.mean(np.abs(ybar - p.mean()) > eps)
        assert freq <= chebyshev_bound(L, eps) == 0.5
