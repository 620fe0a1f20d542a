"""Tensor kernel unit tests and the random-strain property sweep."""

import math

import numpy as np
import pytest

from fracwave.elasticity import (
    MaterialParams,
    SymTensor2,
    ZERO_TENSOR,
    damaged_stress,
    deviatoric_split,
    energy_density_w,
    energy_density_w_plus,
    eta_coefficient,
    indicator_xi,
    lame_from_engineering,
    strain,
    stress_iso,
    stress_split,
    unilateral_stress,
)


@pytest.fixture(scope="module")
def mat():
    return MaterialParams.from_engineering(50.0, 0.29, 5e-4, 0.5, 0.01, 1e-4)


def random_tensors(n, seed=0, scale=1.0):
    rng = np.random.default_rng(seed)
    comps = rng.normal(scale=scale, size=(n, 3))
    return [SymTensor2(*c) for c in comps]


class TestLameConversion:
    def test_reference_values(self, mat):
        # hand computation: 50*0.29 / (1.29 * 0.42) and 50 / (2 * 1.29)
        lam, mu = lame_from_engineering(50.0, 0.29)
        assert lam == pytest.approx(14.5 / (1.29 * 0.42), rel=1e-14)
        assert mu == pytest.approx(50.0 / 2.58, rel=1e-14)
        assert lam == pytest.approx(26.7627, abs=1e-4)
        assert mu == pytest.approx(19.3798, abs=1e-4)
        assert mat.lam == lam and mat.mu == mu

    def test_zero_poisson(self):
        lam, mu = lame_from_engineering(80.0, 0.0)
        assert lam == 0.0
        assert mu == 40.0

    def test_coercive(self):
        lam, mu = lame_from_engineering(50.0, 0.29)
        assert mu > 0 and 2 * lam + 2 * mu > 0

    def test_singular_poisson_rejected(self):
        with pytest.raises(ValueError):
            lame_from_engineering(50.0, 0.5)
        with pytest.raises(ValueError):
            lame_from_engineering(-1.0, 0.3)

    def test_plane_stress_variant(self):
        lam, mu = lame_from_engineering(50.0, 0.29, plane_strain=False)
        assert lam == pytest.approx(50.0 * 0.29 / (1 - 0.29**2), rel=1e-14)
        assert mu == pytest.approx(50.0 / 2.58, rel=1e-14)


class TestStrain:
    def test_zero(self):
        assert strain([[0, 0], [0, 0]]) == ZERO_TENSOR

    def test_symmetrization(self):
        e = strain([[0, 1], [0, 0]])
        assert (e.xx, e.yy, e.xy) == (0, 0, 0.5)

    def test_rigid_rotation(self):
        e = strain([[0, -0.3], [0.3, 0]])
        assert e == ZERO_TENSOR


class TestStressKernels:
    def test_stress_zero(self, mat):
        assert stress_iso(ZERO_TENSOR, mat) == ZERO_TENSOR

    def test_stress_identity(self, mat):
        s = stress_iso(SymTensor2.identity(), mat)
        expected = 2 * mat.lam + 2 * mat.mu
        assert s.xx == pytest.approx(expected, rel=1e-14)
        assert s.yy == pytest.approx(expected, rel=1e-14)
        assert s.xy == 0.0
        assert expected == pytest.approx(92.285, abs=5e-4)

    def test_pure_shear(self, mat):
        s = stress_iso(SymTensor2(0, 0, 0.7), mat)
        assert (s.xx, s.yy) == (0.0, 0.0)
        assert s.xy == pytest.approx(2 * mat.mu * 0.7, rel=1e-14)

    def test_damaged_endpoints(self, mat):
        e = SymTensor2(0.3, -0.1, 0.2)
        assert damaged_stress(e, 0.0, mat) == stress_iso(e, mat)
        assert damaged_stress(e, 1.0, mat) == ZERO_TENSOR
        s = damaged_stress(SymTensor2.identity(), 0.5, mat)
        assert s.xx == pytest.approx(0.25 * (2 * mat.lam + 2 * mat.mu), rel=1e-14)

    def test_damaged_rejects_out_of_range(self, mat):
        with pytest.raises(ValueError):
            damaged_stress(ZERO_TENSOR, 1.5, mat)


class TestDeviatoricSplit:
    def test_identity(self):
        div, dev = deviatoric_split(SymTensor2.identity())
        assert div == 2.0
        assert dev == ZERO_TENSOR

    def test_pure_shear(self):
        e = SymTensor2(0, 0, 1.2)
        div, dev = deviatoric_split(e)
        assert div == 0.0
        assert dev == e

    def test_hand_example(self):
        div, dev = deviatoric_split(SymTensor2(3, 1, 2))
        assert div == 4.0
        assert (dev.xx, dev.yy, dev.xy) == (1.0, -1.0, 2.0)


class TestStressSplit:
    def test_expansion_kills_minus(self, mat):
        sp, sm = stress_split(SymTensor2(0.5, 0.1, 0.3), mat)
        assert sm == ZERO_TENSOR

    def test_pure_compression(self, mat):
        sp, sm = stress_split(SymTensor2.identity(-1.0), mat)
        assert sp == ZERO_TENSOR
        assert sm.xx == pytest.approx(2 * mat.lam_star, rel=1e-14)
        assert sm.xy == 0.0

    def test_split_recovers_stress(self, mat):
        for e in random_tensors(50, seed=7):
            sp, sm = stress_split(e, mat)
            s = stress_iso(e, mat)
            diff = sp - sm - s
            assert diff.norm() <= 1e-12 * max(s.norm(), 1.0)


class TestIndicator:
    def test_branches(self):
        assert indicator_xi(0.3) == 1
        assert indicator_xi(-0.3) == 0
        assert indicator_xi(0.0) == 1


class TestEnergyDensities:
    def test_w_zero(self, mat):
        assert energy_density_w(ZERO_TENSOR, mat) == 0.0

    def test_w_pure_shear(self, mat):
        a = 0.4
        assert energy_density_w(SymTensor2(0, 0, a), mat) == pytest.approx(
            4 * mat.mu * a * a, rel=1e-14
        )

    def test_w_matches_contraction(self, mat):
        for e in random_tensors(50, seed=3):
            w = energy_density_w(e, mat)
            assert w == pytest.approx(stress_iso(e, mat).inner(e), rel=1e-12)

    def test_w_plus_compression_vanishes(self, mat):
        assert energy_density_w_plus(SymTensor2.identity(-1.0), 0, mat) == 0.0

    def test_w_plus_equals_w_under_expansion(self, mat):
        for e in random_tensors(80, seed=11):
            div = e.trace()
            if div < 0:
                e = SymTensor2(e.xx - div, e.yy, e.xy)  # force expansion
            w = energy_density_w(e, mat)
            wp = energy_density_w_plus(e, indicator_xi(e.trace()), mat)
            assert wp == pytest.approx(w, rel=1e-12, abs=1e-14)

    def test_w_plus_pure_shear_any_xi(self, mat):
        a = 0.25
        e = SymTensor2(0, 0, a)
        for xi in (0, 1):
            assert energy_density_w_plus(e, xi, mat) == pytest.approx(
                4 * mat.mu * a * a, rel=1e-14
            )

    def test_w_plus_single_mu_variant(self, mat):
        e = SymTensor2(0.2, -0.5, 0.3)
        full = energy_density_w_plus(e, 0, mat)
        half = energy_density_w_plus(e, 0, mat, mu_convention="single-mu")
        assert half == pytest.approx(full / 2.0, rel=1e-14)

    def test_w_plus_is_sigma_plus_contraction(self, mat):
        for e in random_tensors(50, seed=21):
            sp, _ = stress_split(e, mat)
            wp = energy_density_w_plus(e, indicator_xi(e.trace()), mat)
            assert wp == pytest.approx(sp.inner(e), rel=1e-12, abs=1e-13)


class TestEtaCoefficient:
    def test_anchor_values(self, mat):
        assert eta_coefficient(0.0, 1, mat) == pytest.approx(mat.lam, rel=1e-13)
        assert eta_coefficient(0.0, 0, mat) == pytest.approx(mat.lam, rel=1e-13)
        assert eta_coefficient(1.0, 0, mat) == pytest.approx(mat.lam_star, rel=1e-14)

    def test_reconstruction_identity(self, mat):
        rng = np.random.default_rng(17)
        for _ in range(100):
            e = SymTensor2(*rng.normal(size=3))
            z = float(rng.uniform(0, 1))
            xi = int(rng.integers(0, 2))
            eta = eta_coefficient(z, xi, mat)
            g = (1 - z) ** 2
            lt = eta * e.trace()
            rebuilt = SymTensor2(
                lt + 2 * mat.mu * g * e.xx, lt + 2 * mat.mu * g * e.yy, 2 * mat.mu * g * e.xy
            )
            direct = unilateral_stress(e, xi, z, mat)
            assert (rebuilt - direct).norm() <= 1e-12 * max(direct.norm(), 1.0)

    def test_undamaged_reduces_to_isotropic(self, mat):
        for e in random_tensors(30, seed=5):
            s = stress_iso(e, mat)
            for xi in (0, 1):
                d = unilateral_stress(e, xi, 0.0, mat)
                assert (d - s).norm() <= 1e-12 * max(s.norm(), 1.0)


class TestPropertySweep:
    """Bulk random-strain identities with the reference material."""

    N = 10_000

    def test_sweep(self, mat):
        rng = np.random.default_rng(2024)
        exx, eyy, exy = rng.normal(size=(3, self.N))
        div = exx + eyy
        # vectorized forms of the kernels, checked elementwise elsewhere
        norm_sq = exx**2 + eyy**2 + 2 * exy**2
        w = mat.lam * div**2 + 2 * mat.mu * norm_sq
        dev_sq = 0.5 * (exx - eyy) ** 2 + 2 * exy**2
        xi = (div >= 0).astype(float)
        w_plus = mat.lam_star * xi * div**2 + 2 * mat.mu * dev_sq

        c_star = mat.coercivity_constant
        assert (w >= c_star * norm_sq * (1 - 1e-12)).all()
        assert (w_plus <= w * (1 + 1e-12) + 1e-13).all()
        expansion = div >= 0
        np.testing.assert_allclose(w_plus[expansion], w[expansion], rtol=1e-12)
        assert (w_plus[~expansion] < w[~expansion]).all()

        # Jordan split: sigma_plus - sigma_minus == sigma, componentwise
        div_pos = np.maximum(div, 0.0)
        div_neg = np.maximum(-div, 0.0)
        sxx = mat.lam * div + 2 * mat.mu * exx
        syy = mat.lam * div + 2 * mat.mu * eyy
        sxy = 2 * mat.mu * exy
        spxx = mat.lam_star * div_pos + 2 * mat.mu * (exx - div / 2)
        spyy = mat.lam_star * div_pos + 2 * mat.mu * (eyy - div / 2)
        scale = np.maximum(np.abs(sxx) + np.abs(syy) + np.abs(sxy), 1.0)
        assert (np.abs(spxx - mat.lam_star * div_neg - sxx) <= 1e-12 * scale).all()
        assert (np.abs(spyy - mat.lam_star * div_neg - syy) <= 1e-12 * scale).all()

        # eta reconstruction over random (z, xi)
        z = rng.uniform(0, 1, size=self.N)
        xi_r = rng.integers(0, 2, size=self.N).astype(float)
        g = (1 - z) ** 2
        eta = g * (mat.lam_star * xi_r - mat.mu) + mat.lam_star * (1 - xi_r)
        tilde_xx = eta * div + 2 * mat.mu * g * exx
        ref_xx = g * (mat.lam_star * xi_r * div + 2 * mat.mu * (exx - div / 2)) + mat.lam_star * (
            1 - xi_r
        ) * div
        scale2 = np.maximum(np.abs(ref_xx), 1.0)
        assert (np.abs(tilde_xx - ref_xx) <= 1e-12 * scale2).all()

    def test_scalar_kernels_match_sweep_sample(self, mat):
        # spot-check the vectorized sweep against the scalar kernels
        rng = np.random.default_rng(99)
        for _ in range(200):
            e = SymTensor2(*rng.normal(size=3))
            w = energy_density_w(e, mat)
            assert w >= mat.coercivity_constant * e.inner(e) * (1 - 1e-12)
            wp = energy_density_w_plus(e, indicator_xi(e.trace()), mat)
            assert wp <= w * (1 + 1e-12) + 1e-13
