"""Strain-energy splits and the history field."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phasefrac.materials import MaterialParams
from phasefrac.splits import SPLITS, split_energy, split_energy_batch, update_history

PARAMS = MaterialParams(E=210000.0, nu=0.3, Gc=2.7, ell=0.024)

small = st.floats(min_value=-0.05, max_value=0.05, allow_nan=False)


def quadratic_form(eps, params):
    """Independent oracle: 0.5 eps^T C0 eps with C0 built from E, nu."""
    E, nu = params.E, params.nu
    lam = E * nu / ((1 + nu) * (1 - 2 * nu))
    mu = E / (2 * (1 + nu))
    C0 = np.array(
        [[lam + 2 * mu, lam, 0.0], [lam, lam + 2 * mu, 0.0], [0.0, 0.0, mu]]
    )
    return 0.5 * float(np.asarray(eps) @ C0 @ np.asarray(eps))


class TestSplitValues:
    def test_zero_strain_all_zero(self):
        for split in SPLITS:
            res = split_energy(np.zeros(3), PARAMS, split)
            assert res.psi0 == 0.0
            assert res.psi0_plus == 0.0
            assert res.psi0_minus == 0.0
            assert np.all(res.sigma0 == 0.0)

    def test_hydrostatic_compression_voldev(self):
        a = 1e-3
        eps = np.array([-a, -a, 0.0])
        res = split_energy(eps, PARAMS, "vol-dev")
        kn = PARAMS.lam + PARAMS.mu
        assert res.psi0_plus == pytest.approx(0.0, abs=1e-14)
        assert res.psi0_minus == pytest.approx(0.5 * kn * (2 * a) ** 2, rel=1e-12)

    def test_uniaxial_strain_tension_sums_to_quadratic_form(self):
        eps = np.array([1e-3, 0.0, 0.0])
        for split in SPLITS:
            res = split_energy(eps, PARAMS, split)
            assert res.psi0_plus + res.psi0_minus == pytest.approx(
                quadratic_form(eps, PARAMS), rel=1e-12
            )

    def test_sigma0_is_always_undamaged_stress(self):
        rng = np.random.default_rng(7)
        eps = rng.normal(scale=1e-3, size=3)
        C0 = PARAMS.elasticity_matrix()
        for split in SPLITS:
            res = split_energy(eps, PARAMS, split)
            np.testing.assert_allclose(res.sigma0, C0 @ eps, rtol=1e-13)

    def test_spectral_pure_shear_halves_energy(self):
        # principal strains +g/2 and -g/2; lambda term vanishes
        g = 2e-3
        eps = np.array([0.0, 0.0, g])
        res = split_energy(eps, PARAMS, "spectral")
        assert res.psi0_plus == pytest.approx(res.psi0_minus, rel=1e-12)
        assert res.psi0_plus == pytest.approx(0.5 * res.psi0, rel=1e-12)


class TestSplitProperties:
    @given(exx=small, eyy=small, gxy=small)
    @settings(max_examples=200, deadline=None)
    def test_partition_of_energy(self, exx, eyy, gxy):
        eps = np.array([exx, eyy, gxy])
        for split in SPLITS:
            plus, minus, total = split_energy_batch(eps, PARAMS, split)
            assert plus >= -1e-16
            assert minus >= -1e-16
            assert plus + minus == pytest.approx(total, rel=1e-10, abs=1e-18)
            assert total == pytest.approx(quadratic_form(eps, PARAMS),
                                          rel=1e-10, abs=1e-18)

    @given(exx=st.floats(1e-5, 0.05), eyy=st.floats(1e-5, 0.05), gxy=small)
    @settings(max_examples=100, deadline=None)
    def test_spectral_matches_isotropic_when_principals_positive(
        self, exx, eyy, gxy
    ):
        eps = np.array([exx, eyy, gxy])
        exy = 0.5 * gxy
        e_min = 0.5 * (exx + eyy) - np.hypot(0.5 * (exx - eyy), exy)
        if e_min < 0:
            return
        plus, minus, total = split_energy_batch(eps, PARAMS, "spectral")
        assert plus == pytest.approx(total, rel=1e-12)
        assert minus == pytest.approx(0.0, abs=1e-15 * total + 1e-30)

    def test_voldev_on_pure_volumetric_tension(self):
        a = 2e-3
        eps = np.array([a, a, 0.0])
        plus, minus, total = split_energy_batch(eps, PARAMS, "vol-dev")
        assert plus == pytest.approx(total, rel=1e-12)
        assert minus == 0.0

    def test_repeated_eigenvalues_are_fine(self):
        eps = np.array([1e-3, 1e-3, 0.0])
        plus, minus, total = split_energy_batch(eps, PARAMS, "spectral")
        assert plus + minus == pytest.approx(total, rel=1e-12)

    def test_batch_shapes(self):
        rng = np.random.default_rng(3)
        eps = rng.normal(scale=1e-3, size=(5, 4, 3))
        plus, minus, total = split_energy_batch(eps, PARAMS, "spectral")
        assert plus.shape == (5, 4)
        np.testing.assert_allclose(plus + minus, total, rtol=1e-10)

    def test_unknown_split_rejected(self):
        with pytest.raises(ValueError):
            split_energy(np.zeros(3), PARAMS, "anisotropic")


class TestHistoryUpdate:
    def test_unloading_holds_peak(self):
        assert update_history(5.0, 3.0) == 5.0

    def test_loading_raises(self):
        assert update_history(0.0, 7.0) == 7.0

    def test_reload_to_same_strain_idempotent(self):
        h = update_history(0.0, 4.0)   # load
        h = update_history(h, 1.0)     # unload
        h = update_history(h, 4.0)     # reload to the same strain
        assert h == 4.0

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            update_history(-1.0, 0.0)
        with pytest.raises(ValueError):
            update_history(0.0, -1.0)

    @given(st.lists(st.floats(0.0, 1e3), min_size=1, max_size=30))
    @settings(max_examples=100, deadline=None)
    def test_monotone_over_any_history(self, loads):
        h = 0.0
        for p in loads:
            h_new = update_history(h, p)
            assert h_new >= h
            h = h_new
        assert h == max(loads)

    def test_vectorized(self):
        h = update_history(np.array([1.0, 5.0]), np.array([3.0, 2.0]))
        np.testing.assert_array_equal(h, [3.0, 5.0])
