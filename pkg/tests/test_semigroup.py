import numpy as np
import pytest
import scipy.linalg

from nskper.model import FluidParams, PressureLaw, State, derive_params
from nskper.semigroup import (
    ETDTable,
    FloorTimeError,
    PropagatorTable,
    apply_semigroup,
    block_eigenvalues,
    block_exp,
    block_matrix,
    decay_experiment,
    floor_time,
    gaussian_bump,
    mode_propagator,
    sinhc,
    spectral_gap,
    symbol,
)
from nskper.spectral import make_grid

from conftest import band_limited
from oracles import full_mode_exp, random_params, rk4_matrix_exp


def unit_params():
    # gamma = 1, kappa' = 1, mu' + nu' = 3
    fp = FluidParams(rho_inf=1.0, mu=1.0, nu=1.0, kappa=1.0, pressure=PressureLaw(a=1.0, g=1.0))
    return derive_params(fp, 3)


class TestSymbol:
    def test_zero_mode(self, rp2):
        sym = symbol([0.0, 0.0], rp2)
        assert np.all(sym.acoustic_block == 0) and sym.solenoidal_rate == 0

    def test_trace_det_example(self):
        sym = symbol([1.0, 0.0, 0.0], unit_params())
        assert np.trace(sym.acoustic_block) == pytest.approx(-3.0)
        assert np.linalg.det(sym.acoustic_block) == pytest.approx(2.0)

    def test_vieta(self, rng):
        for _ in range(100):
            _, rp = random_params(rng)
            k = 10 ** rng.uniform(-2, 2)
            lam = block_eigenvalues(k, rp)
            B = block_matrix(k, rp)
            tr, det = np.trace(B), np.linalg.det(B)
            assert abs(lam.sum() - tr) <= 1e-12 * max(1.0, abs(tr))
            assert abs(np.prod(lam) - det) <= 1e-12 * max(1.0, abs(det))
            assert np.max(lam.real) < 0

    def test_spectral_gap_positive(self, rp2):
        g = make_grid(2, 32, 2 * np.pi)
        theta = spectral_gap(g, rp2)
        assert theta > 0
        k = g.xi_abs[g.xi_abs > 0]
        assert np.all(np.max(block_eigenvalues(k, rp2).real, axis=-1) <= -theta * np.minimum(1, k**2) + 1e-12)


class TestPropagator:
    def test_identity_at_zero(self, rp2):
        p = mode_propagator(symbol([1.0, 2.0], rp2), 0.0)
        np.testing.assert_array_equal(p.acoustic_exp, np.eye(2))
        assert p.solenoidal_factor == 1.0

    def test_solenoidal_heat_factor(self, rp2):
        p = mode_propagator(symbol([3.0, 4.0], rp2), 0.2)
        assert p.solenoidal_factor == pytest.approx(np.exp(-rp2.mu_p * 25 * 0.2), rel=1e-15)

    def test_matches_expm(self, rng):
        for _ in range(50):
            _, rp = random_params(rng)
            k = 10 ** rng.uniform(-3, 1.5)
            t = rng.uniform(0, 3)
            ref = scipy.linalg.expm(t * block_matrix(k, rp))
            got = np.array(block_exp(k, t, rp)).reshape(2, 2)
            assert np.max(np.abs(got - ref)) <= 1e-11 * max(1e-300, np.max(np.abs(ref)))

    def test_near_degenerate(self):
        # choose mu'+nu' so that D = 0 exactly at k = 1
        gam, kp = 1.0, 1.0
        # (mu'+nu')^2 k^4 = 4 gam (gam + kp k^2) k^2 -> mu'+nu' = sqrt(8) at k = 1
        s = np.sqrt(8.0)
        fp = FluidParams(rho_inf=1.0, mu=s / 3, nu=s / 3, kappa=1.0, pressure=PressureLaw(1.0, 1.0))
        rp = derive_params(fp, 2)
        assert rp.mu_p + rp.nu_p == pytest.approx(s)
        for k in (1.0, 1 + 1e-9, 1 - 1e-7, 1 + 1e-4):
            for t in (1e-3, 0.5, 4.0):
                ref = scipy.linalg.expm(t * block_matrix(k, rp))
                got = np.array(block_exp(k, t, rp)).reshape(2, 2)
                assert np.max(np.abs(got - ref)) <= 1e-12 * np.max(np.abs(ref))

    def test_semigroup_property(self, rng):
        for _ in range(100):
            _, rp = random_params(rng)
            k = 10 ** rng.uniform(-2, 1)
            t, s = rng.uniform(0, 2, 2)
            a = np.array(block_exp(k, t, rp)).reshape(2, 2)
            b = np.array(block_exp(k, s, rp)).reshape(2, 2)
            c = np.array(block_exp(k, t + s, rp)).reshape(2, 2)
            assert np.max(np.abs(a @ b - c)) <= 1e-10 * np.max(np.abs(c))

    def test_rk4_oracle_small_batch(self, rng):
        mats, ts, rates = [], [], []
        for _ in range(10):
            _, rp = random_params(rng)
            k = 10 ** rng.uniform(-1, 0.5)
            B = block_matrix(k, rp)
            mats.append(B)
            ts.append(rng.uniform(0, min(5.0, 20 / np.max(np.abs(np.linalg.eigvals(B))))))
        ref = rk4_matrix_exp(np.array(mats), np.array(ts), steps=2000)
        for B, t, r in zip(mats, ts, ref):
            got = scipy.linalg.expm(t * B)
            assert np.max(np.abs(got - r)) <= 1e-8 * np.max(np.abs(got))

    def test_sinhc(self):
        z = np.array([0.0, 1e-6, 1e-3, 0.5, 3.0])
        ref = np.where(z == 0, 1.0, np.sinh(z) / np.where(z == 0, 1, z))
        np.testing.assert_allclose(sinhc(z), ref, rtol=1e-15)


class TestGridApplication:
    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_matches_full_mode_matrix(self, n, rng):
        _, rp = random_params(rng, n)
        g = make_grid(n, 8, 2.5)
        U = State.from_physical(g, band_limited(g, rng), band_limited(g, rng, vector=True))
        t = 0.37
        out = apply_semigroup(U, t, rp)
        for _ in range(10):
            idx = tuple(rng.integers(0, 8, n))
            if g.nyquist_mask[idx]:
                continue
            sym = symbol(g.xi[(slice(None),) + idx], rp)
            vec = np.concatenate([[U.sigma[idx]], U.v[(slice(None),) + idx]])
            ref = full_mode_exp(sym, t) @ vec
            got = np.concatenate([[out.sigma[idx]], out.v[(slice(None),) + idx]])
            np.testing.assert_allclose(got, ref, atol=1e-12 * max(1.0, np.max(np.abs(vec))))

    def test_identity_realness_mass(self, rp2, rng):
        g = make_grid(2, 16, 2 * np.pi)
        U = State.from_physical(g, 1.0 + band_limited(g, rng), band_limited(g, rng, vector=True) + 0.5)
        same = apply_semigroup(U, 0.0, rp2)
        np.testing.assert_allclose(same.sigma, U.sigma, atol=1e-15)
        np.testing.assert_allclose(same.v, U.v, atol=1e-15)
        out = apply_semigroup(U, 0.8, rp2)
        assert out.hermitian_defect() < 1e-15
        assert out.sigma[0, 0] == U.sigma[0, 0]
        np.testing.assert_array_equal(out.v[:, 0, 0], U.v[:, 0, 0])

    def test_norm_decreases_for_zero_mean_states(self, rp2, rng):
        g = make_grid(2, 16, 2 * np.pi)
        for _ in range(20):
            s = band_limited(g, rng)
            v = band_limited(g, rng, vector=True)
            U = State.from_physical(g, s - s.mean(), v - v.mean(axis=(1, 2), keepdims=True))
            assert apply_semigroup(U, 10.0, rp2).l2_norm() < U.l2_norm()

    def test_negative_time_rejected(self, rp2, grid2):
        with pytest.raises(ValueError):
            apply_semigroup(State.zeros(grid2), -1.0, rp2)

    def test_phi_tables(self, rp2):
        g = make_grid(2, 8, 2 * np.pi)
        h = 0.05
        tab = ETDTable(g, rp2, h)
        k = g.xi_abs
        # phi1(hB) = int_0^1 exp((1-s) h B) ds, by Gauss-Legendre on the exact propagator
        x, w = np.polynomial.legendre.leggauss(40)
        acc = [np.zeros(g.shape) for _ in range(4)]
        acc2 = [np.zeros(g.shape) for _ in range(4)]
        for xi_, wi in zip(x, w):
            s = 0.5 * (xi_ + 1)
            e = block_exp(k, (1 - s) * h, rp2)
            for i in range(4):
                acc[i] += 0.5 * wi * e[i]
                acc2[i] += 0.5 * wi * s * e[i]
        for i in range(4):
            np.testing.assert_allclose(tab.p1[i], acc[i], atol=1e-13)
            np.testing.assert_allclose(tab.p2[i], acc2[i], atol=1e-13)


class TestDecayHarness:
    def test_floor_guard(self, rp2):
        g = make_grid(2, 16, 2 * np.pi)
        ts = floor_time(g, rp2)
        with pytest.raises(FloorTimeError) as exc:
            decay_experiment(gaussian_bump(g, 0.5), [0.0, 2 * ts], rp2)
        assert "t* =" in str(exc.value) and exc.value.t_star == ts

    def test_requires_zero_mean(self, rp2):
        g = make_grid(1, 32, 20.0)
        U = gaussian_bump(g, 1.0)
        U.sigma[0] = 1.0
        with pytest.raises(ValueError):
            decay_experiment(U, [0.0, 0.1], rp2)

    def test_theory_exponents(self, fp):
        g = make_grid(1, 64, 40.0)
        rp = derive_params(fp, 1)
        res = decay_experiment(gaussian_bump(g, 1.0), np.linspace(0, 1, 4), rp)
        assert res.theory == {"sigma": 0.25, "grad_sigma": 0.75, "grad2_sigma": 1.25, "v": 0.25, "grad_v": 0.75}
        assert np.all(np.diff(res.norms["sigma"]) < 0)
