import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nskper.spectral import TorusGrid, make_grid

from conftest import band_limited


class TestGrid:
    def test_one_dim_modes(self):
        g = make_grid(1, 8, 2 * np.pi)
        assert sorted(g.frequencies.tolist()) == list(range(-3, 5))
        np.testing.assert_allclose(g.xi[0], g.frequencies)

    def test_two_dim_small(self):
        g = make_grid(2, 4, 1.0)
        assert g.size == 16
        assert np.max(np.abs(g.xi)) == pytest.approx(4 * np.pi)

    def test_five_dim_size(self):
        assert make_grid(5, 8, 2 * np.pi).size == 32768

    @pytest.mark.parametrize("args", [(0, 8, 1.0), (6, 8, 1.0), (2, 7, 1.0), (2, 2, 1.0), (2, 8, 0.0), (2, 8, -1.0)])
    def test_rejects_bad_arguments(self, args):
        with pytest.raises(ValueError):
            make_grid(*args)

    def test_negated_modes_and_unique_zero(self):
        g = make_grid(2, 8, 3.0)
        zero = np.all(g.mode_index == 0, axis=0)
        assert zero.sum() == 1
        # xi(-m) = -xi(m) away from the Nyquist planes
        inner = ~g.nyquist_mask
        for idx in zip(*np.nonzero(inner)):
            neg = tuple((-i) % 8 for i in idx)
            np.testing.assert_allclose(g.xi[(slice(None),) + neg], -g.xi[(slice(None),) + idx])


class TestTransforms:
    def test_constant(self):
        g = make_grid(2, 8, 2.0)
        c = g.forward(np.full(g.shape, 3.5))
        assert c[0, 0] == pytest.approx(3.5)
        c[0, 0] = 0
        assert np.max(np.abs(c)) < 1e-15

    def test_single_sine(self):
        L = 5.0
        g = make_grid(1, 16, L)
        c = g.forward(np.sin(2 * np.pi * g.coordinates[0] / L))
        nz = np.nonzero(np.abs(c) > 1e-14)[0]
        assert sorted(g.frequencies[nz].tolist()) == [-1, 1]
        assert c[1] == pytest.approx(np.conj(c[-1]))

    @pytest.mark.parametrize("n,p", [(1, 32), (2, 16), (3, 8)])
    def test_round_trip_and_parseval(self, n, p, rng):
        g = make_grid(n, p, 1.7)
        for _ in range(100 if n < 3 else 20):
            u = rng.standard_normal(g.shape)
            c = g.forward(u)
            np.testing.assert_allclose(g.inverse(c), u, rtol=0, atol=1e-12 * np.max(np.abs(u)))
            phys = np.sum(u**2) * g.dx**n
            spec = float(g.weighted_sq(c, 1.0))
            assert spec == pytest.approx(phys, rel=1e-12)

    def test_shape_mismatch(self):
        g = make_grid(2, 8, 1.0)
        with pytest.raises(ValueError):
            g.forward(np.zeros((8, 4)))


class TestDerivatives:
    def test_gradient_of_constant(self):
        g = make_grid(2, 8, 1.0)
        assert np.max(np.abs(g.gradient(g.forward(np.ones(g.shape))))) == 0

    def test_laplacian_eigenfunction(self):
        L = 3.0
        g = make_grid(1, 16, L)
        u = np.sin(2 * np.pi * g.coordinates[0] / L)
        lap = g.inverse(g.laplacian(g.forward(u)))
        np.testing.assert_allclose(lap, -(2 * np.pi / L) ** 2 * u, atol=1e-12)

    @pytest.mark.parametrize("n,p", [(1, 16), (2, 16), (3, 8)])
    def test_div_grad_is_laplacian(self, n, p, rng):
        g = make_grid(n, p, 2.3)
        s = g.forward(band_limited(g, rng))
        np.testing.assert_allclose(g.divergence(g.gradient(s)), g.laplacian(s), atol=1e-12 * np.max(np.abs(g.laplacian(s))))

    def test_mixed_derivatives_commute(self, rng):
        g = make_grid(3, 8, 1.0)
        s = g.forward(rng.standard_normal(g.shape))
        for i, j in itertools.combinations(range(3), 2):
            # symbols multiply first, so the result is bitwise symmetric in (i, j)
            a = (1j * g.odd_xi[i]) * (1j * g.odd_xi[j]) * s
            b = (1j * g.odd_xi[j]) * (1j * g.odd_xi[i]) * s
            assert np.array_equal(a, b)
            nested = 1j * g.odd_xi[i] * (1j * g.odd_xi[j] * s)
            np.testing.assert_allclose(nested, a, rtol=1e-15, atol=1e-15 * np.max(np.abs(a)))

    def test_operations_keep_hermitian_symmetry(self, rng):
        g = make_grid(2, 8, 1.0)
        s = g.forward(rng.standard_normal(g.shape))
        for comp in g.gradient(s):
            assert g.hermitian_defect(comp) < 1e-14
        v = g.forward(rng.standard_normal((2,) + g.shape))
        assert g.hermitian_defect(g.divergence(v)) < 1e-14
        assert g.hermitian_defect(g.laplacian(s)) < 1e-14
        assert g.hermitian_defect(g.dealias(s)) < 1e-14


class TestDealias:
    def test_cutoff_p8(self):
        g = make_grid(2, 8, 1.0)
        kept = g.dealias_mask
        assert np.all(np.abs(g.mode_index[:, kept]) <= 2)
        assert not np.any(kept & np.any(np.abs(g.mode_index) >= 3, axis=0))

    def test_idempotent(self, rng):
        g = make_grid(2, 8, 1.0)
        s = g.dealias(g.forward(rng.standard_normal(g.shape)))
        assert np.array_equal(g.dealias(s), s)

    def test_product_matches_direct_convolution(self, rng):
        # band limit |m| <= 2 keeps all products below P/2 = 4, so no aliasing
        g = make_grid(1, 8, 2 * np.pi)
        a_hat = np.zeros(8, complex)
        b_hat = np.zeros(8, complex)
        for m in range(-2, 3):
            za, zb = rng.standard_normal(2) + 1j * rng.standard_normal(2)
            if m == 0:
                za, zb = za.real, zb.real
            if m >= 0:
                a_hat[m], b_hat[m] = za, zb
                a_hat[-m], b_hat[-m] = np.conj(za), np.conj(zb)
        prod = g.dealias(g.forward(g.inverse(a_hat) * g.inverse(b_hat)))
        direct = np.zeros(8, complex)
        for p in range(-2, 3):
            for q in range(-2, 3):
                m = p + q
                if abs(m) <= 2:
                    direct[m % 8] += a_hat[p % 8] * b_hat[q % 8]
        np.testing.assert_allclose(prod, direct, atol=1e-14)


class TestNorms:
    def test_zero_field(self):
        g = make_grid(2, 8, 1.0)
        for s in range(4):
            assert g.sobolev_norm(np.zeros(g.shape, complex), s) == 0

    def test_sine_h1(self):
        g = make_grid(1, 32, 2 * np.pi)
        c = g.forward(np.sin(g.coordinates[0]))
        assert float(g.sobolev_norm_sq(c, 0)) == pytest.approx(np.pi, rel=1e-14)
        assert float(g.sobolev_norm_sq(c, 1)) == pytest.approx(2 * np.pi, rel=1e-14)

    def test_negative_order_rejected(self):
        with pytest.raises(ValueError):
            make_grid(1, 8, 1.0).sobolev_weight(-1)

    def test_quadrature_oracle(self, rng):
        # trig polynomial with analytic derivatives, integrated by the exact grid rule
        L = 2 * np.pi
        g = make_grid(2, 32, L)
        x, y = g.coordinates
        terms = [(rng.standard_normal(), rng.integers(-5, 6), rng.integers(-5, 6), rng.uniform(0, 2 * np.pi)) for _ in range(6)]
        u = sum(a * np.cos(p * x + q * y + ph) for a, p, q, ph in terms)
        ux = sum(-a * p * np.sin(p * x + q * y + ph) for a, p, q, ph in terms)
        uy = sum(-a * q * np.sin(p * x + q * y + ph) for a, p, q, ph in terms)
        quad = np.sum(u**2 + ux**2 + uy**2) * g.dx**2
        assert float(g.sobolev_norm_sq(g.forward(u), 1)) == pytest.approx(quad, rel=1e-10)

    def test_multiindex_weight_counts_each_index_once(self):
        g = make_grid(2, 8, 2 * np.pi)
        # |alpha| = 2: xi1^4 + xi1^2 xi2^2 + xi2^4
        x1, x2 = g.xi
        np.testing.assert_allclose(g.multiindex_weight(2), x1**4 + x1**2 * x2**2 + x2**4)
        np.testing.assert_allclose(g.multiindex_weight(1), g.xi_sq)

    def test_linf_l1(self, rng):
        g = make_grid(2, 8, 1.5)
        assert g.linf_norm(np.full(g.shape, -2.0)) == 2.0
        assert g.l1_norm(np.full(g.shape, -2.0)) == pytest.approx(2.0 * 1.5**2)
        u = rng.standard_normal(g.shape)
        best, total = 0.0, 0.0
        for i in range(8):
            for j in range(8):
                best = max(best, abs(u[i, j]))
                total += abs(u[i, j])
        assert g.linf_norm(u) == best
        assert g.l1_norm(u) == pytest.approx(total * g.dx**2, rel=1e-15)

    def test_sine_linf_on_crest(self):
        g = make_grid(1, 16, 4.0)
        assert g.linf_norm(np.sin(2 * np.pi * g.coordinates[0] / 4.0)) == pytest.approx(1.0)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), s=st.integers(0, 5), n=st.integers(1, 3))
def test_sobolev_norm_monotone_in_order(seed, s, n):
    g = TorusGrid(n, 8, 1.3)
    u = g.forward(np.random.default_rng(seed).standard_normal(g.shape))
    assert g.sobolev_norm(u, s + 1) >= g.sobolev_norm(u, s)
