"""Shape functions, kinematics and element residual/tangent kernels."""

import numpy as np
import pytest

from phasefrac.elements import (
    DistortedElementError,
    ElementBatch,
    element_residual_and_tangent,
    gauss_rule,
    kinematics,
    shape_eval,
)
from phasefrac.materials import MaterialParams

PARAMS = MaterialParams(E=210000.0, nu=0.3, Gc=2.7, ell=0.1)

UNIT_SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def q8_coords(corners):
    """Append edge midpoints to corner coordinates."""
    mids = 0.5 * (corners + np.roll(corners, -1, axis=0))
    return np.vstack([corners, mids])


class TestShapeFunctions:
    def test_bilinear_center(self):
        N, _ = shape_eval(1, (0.0, 0.0))
        np.testing.assert_allclose(N, 0.25)

    def test_bilinear_nodal_interpolation(self):
        N, _ = shape_eval(1, (-1.0, -1.0))
        np.testing.assert_allclose(N, [1.0, 0.0, 0.0, 0.0], atol=1e-15)

    def test_q8_partition_of_unity(self):
        N, dN = shape_eval(2, (0.3, -0.4))
        assert N.sum() == pytest.approx(1.0, abs=1e-14)
        np.testing.assert_allclose(dN.sum(axis=1), 0.0, atol=1e-14)

    def test_q8_nodal_interpolation(self):
        locs = [(-1, -1), (1, -1), (1, 1), (-1, 1),
                (0, -1), (1, 0), (0, 1), (-1, 0)]
        for a, loc in enumerate(locs):
            N, _ = shape_eval(2, loc)
            expect = np.zeros(8)
            expect[a] = 1.0
            np.testing.assert_allclose(N, expect, atol=1e-14)

    def test_partition_of_unity_random_points(self):
        rng = np.random.default_rng(0)
        for order in (1, 2):
            for _ in range(20):
                pt = rng.uniform(-1, 1, size=2)
                N, dN = shape_eval(order, pt)
                assert N.sum() == pytest.approx(1.0, abs=1e-13)
                np.testing.assert_allclose(dN.sum(axis=1), 0.0, atol=1e-13)

    def test_gauss_rules(self):
        pts, wts = gauss_rule(1)
        assert len(wts) == 4 and wts.sum() == pytest.approx(4.0)
        pts, wts = gauss_rule(2)
        assert len(wts) == 9 and wts.sum() == pytest.approx(4.0)


class TestKinematics:
    def test_rigid_translation_gives_zero_strain(self):
        u_e = np.tile([0.3, -0.7], 4)
        _, _, _, eps = kinematics(UNIT_SQUARE, (0.2, -0.5), u_e)
        np.testing.assert_allclose(eps, 0.0, atol=1e-15)

    def test_uniform_stretch(self):
        ebar = 1e-3
        u_e = np.column_stack([ebar * UNIT_SQUARE[:, 0],
                               np.zeros(4)]).ravel()
        _, _, _, eps = kinematics(UNIT_SQUARE, (0.1, 0.4), u_e)
        np.testing.assert_allclose(eps, [ebar, 0.0, 0.0], atol=1e-18)

    def test_engineering_shear_convention(self):
        gbar = 2e-3
        u_e = np.column_stack([gbar * UNIT_SQUARE[:, 1],
                               np.zeros(4)]).ravel()
        _, _, _, eps = kinematics(UNIT_SQUARE, (-0.3, 0.6), u_e)
        np.testing.assert_allclose(eps, [0.0, 0.0, gbar], atol=1e-18)

    def test_strain_is_bu_times_ue(self):
        rng = np.random.default_rng(1)
        coords = UNIT_SQUARE + rng.normal(scale=0.05, size=(4, 2))
        u_e = rng.normal(scale=1e-3, size=8)
        b_u, b_phi, det, eps = kinematics(coords, (0.2, 0.2), u_e)
        np.testing.assert_allclose(eps, b_u @ u_e)
        assert det > 0
        assert b_phi.shape == (2, 4)

    def test_distorted_element_raises(self):
        bad = UNIT_SQUARE[[0, 3, 2, 1]]  # clockwise
        with pytest.raises(DistortedElementError):
            kinematics(bad, (0.0, 0.0), np.zeros(8))


class TestElementKernels:
    def test_stress_free_state_has_zero_residuals(self):
        out = element_residual_and_tangent(
            UNIT_SQUARE, np.zeros(8), np.zeros(4), np.zeros(4), PARAMS
        )
        np.testing.assert_allclose(out.r_u, 0.0, atol=1e-18)
        np.testing.assert_allclose(out.r_phi, 0.0, atol=1e-18)

    def test_homogeneous_phase_equilibrium(self):
        # With uniform phi and H and no gradient, r_phi vanishes exactly at
        # phi = 2 H ell / (Gc + 2 H ell).
        H = 5.0
        phi_eq = 2 * H * PARAMS.ell / (PARAMS.Gc + 2 * H * PARAMS.ell)
        out = element_residual_and_tangent(
            UNIT_SQUARE, np.zeros(8), np.full(4, phi_eq), np.full(4, H), PARAMS
        )
        np.testing.assert_allclose(out.r_phi, 0.0, atol=1e-14)
        out2 = element_residual_and_tangent(
            UNIT_SQUARE, np.zeros(8), np.full(4, 0.9 * phi_eq), np.full(4, H),
            PARAMS,
        )
        assert np.abs(out2.r_phi).max() > 1e-6

    def test_mass_row_sums_against_quadrature_oracle(self):
        rho = 2.5e-9
        params = MaterialParams(E=1000.0, nu=0.2, Gc=1.0, ell=0.1, rho=rho)
        corners = np.array([[0.0, 0.0], [2.0, 0.2], [2.3, 1.5], [-0.1, 1.2]])
        out = element_residual_and_tangent(
            corners, np.zeros(8), np.zeros(4), np.zeros(4), params
        )
        # independent 2x2 quadrature of the element area
        pts, wts = gauss_rule(1)
        area = 0.0
        for pt, w in zip(pts, wts):
            _, dN = shape_eval(1, pt)
            jac = dN @ corners
            area += w * np.linalg.det(jac)
        per_direction = out.M_e[0::2, :].sum()
        assert per_direction == pytest.approx(rho * area, rel=1e-12)
        assert out.M_e[1::2, :].sum() == pytest.approx(rho * area, rel=1e-12)
        np.testing.assert_allclose(out.M_e, out.M_e.T, atol=1e-18)

    def test_tangent_blocks_symmetric(self):
        rng = np.random.default_rng(2)
        out = element_residual_and_tangent(
            UNIT_SQUARE,
            rng.normal(scale=1e-3, size=8),
            rng.uniform(0, 0.8, size=4),
            rng.uniform(0, 10.0, size=4),
            PARAMS,
        )
        np.testing.assert_allclose(out.K_uu, out.K_uu.T, rtol=1e-14)
        np.testing.assert_allclose(out.K_phiphi, out.K_phiphi.T, rtol=1e-14)

    def test_phase_tangent_positive_definite_on_random_states(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            h = rng.uniform(0.0, 50.0, size=4)
            f = rng.uniform(0.1, 1.0)
            out = element_residual_and_tangent(
                UNIT_SQUARE, np.zeros(8), rng.uniform(0, 1, 4), h, PARAMS,
                f_fatigue=f,
            )
            np.linalg.cholesky(out.K_phiphi)  # raises if not SPD

    def test_fatigue_factor_range_enforced(self):
        with pytest.raises(ValueError):
            element_residual_and_tangent(
                UNIT_SQUARE, np.zeros(8), np.zeros(4), np.zeros(4), PARAMS,
                f_fatigue=0.0,
            )

    def test_inertial_term_added(self):
        params = MaterialParams(E=1000.0, nu=0.2, Gc=1.0, ell=0.1, rho=2e-9)
        accel = np.ones(8) * 3.0
        out0 = element_residual_and_tangent(
            UNIT_SQUARE, np.zeros(8), np.zeros(4), np.zeros(4), params
        )
        out1 = element_residual_and_tangent(
            UNIT_SQUARE, np.zeros(8), np.zeros(4), np.zeros(4), params,
            accel_e=accel,
        )
        np.testing.assert_allclose(out1.r_u - out0.r_u, out0.M_e @ accel,
                                   rtol=1e-13)


def discrete_element_energy(coords, u_e, phi_e, params, f=1.0):
    """Independent quadrature of the regularized energy on one element.

    Includes the conditioning-term energy k * psi0, so its gradient matches
    the residuals exactly (isotropic split, H = psi0 at the same strains).
    """
    order = 1 if len(coords) == 4 else 2
    pts, wts = gauss_rule(order)
    C0 = params.elasticity_matrix()
    total = 0.0
    for pt, w in zip(pts, wts):
        N, dN = shape_eval(order, pt)
        jac = dN @ coords
        det = np.linalg.det(jac)
        grad = np.linalg.solve(jac, dN)
        b_u = np.zeros((3, 2 * len(coords)))
        b_u[0, 0::2] = grad[0]
        b_u[1, 1::2] = grad[1]
        b_u[2, 0::2] = grad[1]
        b_u[2, 1::2] = grad[0]
        eps = b_u @ u_e
        psi0 = 0.5 * eps @ C0 @ eps
        phi = N @ phi_e
        gphi = grad @ phi_e
        total += w * det * (
            ((1 - phi) ** 2 + params.k) * psi0
            + f * params.Gc * (phi**2 / (2 * params.ell)
                               + 0.5 * params.ell * (gphi @ gphi))
        )
    return total


class TestFiniteDifferenceConsistency:
    def fd_step(self, x):
        return 1e-7 * np.linalg.norm(x) + 1e-10

    def test_kuu_matches_fd_of_ru(self):
        rng = np.random.default_rng(4)
        coords = UNIT_SQUARE + rng.normal(scale=0.03, size=(4, 2))
        u_e = rng.normal(scale=1e-3, size=8)
        phi_e = rng.uniform(0.0, 0.7, size=4)
        h = rng.uniform(0.0, 5.0, size=4)
        out = element_residual_and_tangent(coords, u_e, phi_e, h, PARAMS)
        step = self.fd_step(u_e)
        fd = np.zeros((8, 8))
        for j in range(8):
            up, dn = u_e.copy(), u_e.copy()
            up[j] += step
            dn[j] -= step
            rp = element_residual_and_tangent(coords, up, phi_e, h, PARAMS).r_u
            rm = element_residual_and_tangent(coords, dn, phi_e, h, PARAMS).r_u
            fd[:, j] = (rp - rm) / (2 * step)
        assert np.abs(fd - out.K_uu).max() <= 1e-6 * np.abs(out.K_uu).max()

    def test_kphiphi_matches_fd_of_rphi(self):
        rng = np.random.default_rng(5)
        coords = UNIT_SQUARE + rng.normal(scale=0.03, size=(4, 2))
        u_e = rng.normal(scale=1e-3, size=8)
        phi_e = rng.uniform(0.0, 0.7, size=4)
        h = rng.uniform(0.0, 5.0, size=4)
        out = element_residual_and_tangent(coords, u_e, phi_e, h, PARAMS)
        step = self.fd_step(phi_e)
        fd = np.zeros((4, 4))
        for j in range(4):
            up, dn = phi_e.copy(), phi_e.copy()
            up[j] += step
            dn[j] -= step
            rp = element_residual_and_tangent(coords, u_e, up, h, PARAMS).r_phi
            rm = element_residual_and_tangent(coords, u_e, dn, h, PARAMS).r_phi
            fd[:, j] = (rp - rm) / (2 * step)
        assert np.abs(fd - out.K_phiphi).max() <= 1e-6 * np.abs(out.K_phiphi).max()

    def test_residuals_are_gradient_of_energy(self):
        # Isotropic split with H = psi0 at the current strains: the residual
        # pair is the exact gradient of the discrete energy (plus the
        # k-conditioning term, which the oracle includes).
        rng = np.random.default_rng(6)
        coords = UNIT_SQUARE + rng.normal(scale=0.03, size=(4, 2))
        u_e = rng.normal(scale=1e-3, size=8)
        phi_e = rng.uniform(0.0, 0.6, size=4)

        batch = ElementBatch(coords[None])
        eps = batch.strains(u_e[None])[0]
        C0 = PARAMS.elasticity_matrix()
        h = 0.5 * np.einsum("ga,ab,gb->g", eps, C0, eps)

        out = element_residual_and_tangent(coords, u_e, phi_e, h, PARAMS)

        step = self.fd_step(u_e)
        for j in range(8):
            up, dn = u_e.copy(), u_e.copy()
            up[j] += step
            dn[j] -= step
            grad = (
                discrete_element_energy(coords, up, phi_e, PARAMS)
                - discrete_element_energy(coords, dn, phi_e, PARAMS)
            ) / (2 * step)
            assert grad == pytest.approx(out.r_u[j], rel=1e-5, abs=1e-10)

        step = self.fd_step(phi_e)
        for j in range(4):
            up, dn = phi_e.copy(), phi_e.copy()
            up[j] += step
            dn[j] -= step
            grad = (
                discrete_element_energy(coords, u_e, up, PARAMS)
                - discrete_element_energy(coords, u_e, dn, PARAMS)
            ) / (2 * step)
            assert grad == pytest.approx(out.r_phi[j], rel=1e-5, abs=1e-12)
