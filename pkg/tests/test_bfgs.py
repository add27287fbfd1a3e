"""Inverse-form BFGS operator against the dense direct-update oracle."""

import numpy as np
import pytest

from phasefrac.bfgs import BfgsOperator, bfgs_apply_inverse


def direct_update(K, s, y):
    """Dense direct-form BFGS update (the textbook rank-two formula)."""
    Ks = K @ s
    return K - np.outer(Ks, Ks) / (s @ Ks) + np.outer(y, y) / (s @ y)


def densify(op, n):
    """Materialize the inverse operator by applying it to basis vectors."""
    H = np.zeros((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        H[:, j] = op.apply(e)
    return H


def random_spd(rng, n):
    A = rng.normal(size=(n, n))
    return A @ A.T + n * np.eye(n)


class TestScalarSecant:
    def test_scalar_update_is_secant(self):
        # K_prev = 2, dz = 1, dr = 3: updated K = 2 - 4/2 + 9/3 = 3
        K = np.array([[2.0]])
        s, y = np.array([1.0]), np.array([3.0])
        K_new = direct_update(K, s, y)
        assert K_new[0, 0] == pytest.approx(3.0)
        d = bfgs_apply_inverse([(s, y)], lambda r: r / 2.0, np.array([3.0]))
        assert d[0] == pytest.approx(1.0)  # K~ dz = dr

    def test_consistent_pair_is_fixed_point(self):
        rng = np.random.default_rng(0)
        n = 6
        K = random_spd(rng, n)
        K_inv = np.linalg.inv(K)
        s = rng.normal(size=n)
        y = K @ s  # already consistent with the operator
        op = BfgsOperator(lambda r: K_inv @ r)
        op.push_pair(s, y)
        H = densify(op, n)
        np.testing.assert_allclose(H, K_inv, rtol=1e-12, atol=1e-14)


class TestAgainstDenseOracle:
    @pytest.mark.parametrize("n", [2, 5, 12, 20])
    def test_inverse_form_equals_direct_form(self, n):
        rng = np.random.default_rng(n)
        K0 = random_spd(rng, n)
        K0_inv = np.linalg.inv(K0)
        op = BfgsOperator(lambda r: K0_inv @ r)

        K_direct = K0.copy()
        for _ in range(4):
            s = rng.normal(size=n)
            y = K_direct @ s + 0.05 * rng.normal(size=n)
            if s @ y <= 0:
                continue
            K_direct = direct_update(K_direct, s, y)
            op.push_pair(s, y)
        H = densify(op, n)
        np.testing.assert_allclose(
            H, np.linalg.inv(K_direct), rtol=1e-11, atol=1e-12
        )

    @pytest.mark.parametrize("n", [3, 10, 20])
    def test_secant_condition_after_every_pair(self, n):
        rng = np.random.default_rng(100 + n)
        K0 = random_spd(rng, n)
        K0_inv = np.linalg.inv(K0)
        op = BfgsOperator(lambda r: K0_inv @ r)
        for _ in range(6):
            s = rng.normal(size=n)
            y = K0 @ s + 0.2 * rng.normal(size=n)
            if not op.push_pair(s, y):
                continue
            # H y = s for the most recent accepted pair
            err = np.linalg.norm(op.apply(y) - s)
            assert err <= 1e-10 * np.linalg.norm(y)

    def test_operator_stays_spd(self):
        rng = np.random.default_rng(9)
        n = 15
        K0 = random_spd(rng, n)
        K0_inv = np.linalg.inv(K0)
        op = BfgsOperator(lambda r: K0_inv @ r)
        for _ in range(8):
            s = rng.normal(size=n)
            y = K0 @ s + 0.3 * rng.normal(size=n)
            op.push_pair(s, y)
        H = densify(op, n)
        np.testing.assert_allclose(H, H.T, rtol=1e-10, atol=1e-13)
        np.linalg.cholesky(H)  # raises if not SPD


class TestCurvatureSafeguard:
    def test_negative_curvature_pair_skipped_with_warning(self, caplog):
        op = BfgsOperator(lambda r: r)
        with caplog.at_level("WARNING", logger="phasefrac.bfgs"):
            ok = op.push_pair(np.array([1.0, 0.0]), np.array([-2.0, 0.0]))
        assert not ok
        assert op.skipped == 1
        assert op.n_updates == 0
        assert any("curvature" in rec.message for rec in caplog.records)
        # operator unchanged: still the identity action
        np.testing.assert_allclose(op.apply(np.array([3.0, 4.0])), [3.0, 4.0])

    def test_functional_form_skips_bad_pairs(self):
        d = bfgs_apply_inverse(
            [(np.array([1.0]), np.array([-1.0]))], lambda r: r, np.array([2.0])
        )
        assert d[0] == pytest.approx(2.0)
