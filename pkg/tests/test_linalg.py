import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spdkit.errors import DimensionMismatch, InvalidInput, NotPositiveDefinite
from spdkit.linalg import (
    gen_eigvals,
    is_spd,
    regularize,
    schur_sym,
    spd_exp,
    spd_invsqrt,
    spd_log,
    spd_power,
    spd_sqrt,
    sym_eig,
)

from conftest import make_spd


class TestSymEig:
    def test_identity(self):
        e = sym_eig(np.eye(3))
        np.testing.assert_allclose(e.eigenvalues, [1.0, 1.0, 1.0])

    def test_diagonal(self):
        e = sym_eig(np.diag([2.0, 1.0]))
        np.testing.assert_allclose(e.eigenvalues, [1.0, 2.0])
        # Eigenvectors of a diagonal matrix are a permuted identity.
        np.testing.assert_allclose(np.abs(e.eigenvectors), [[0, 1], [1, 0]], atol=1e-14)

    def test_reconstruction_oracle(self, rng):
        a = rng.standard_normal((5, 5))
        a = 0.5 * (a + a.T)
        e = sym_eig(a)
        back = (e.eigenvectors * e.eigenvalues) @ e.eigenvectors.T
        assert np.linalg.norm(back - a) <= 1e-10 * np.linalg.norm(a)
        ortho = e.eigenvectors.T @ e.eigenvectors
        assert np.linalg.norm(ortho - np.eye(5)) <= 1e-12 * 5

    def test_sign_convention(self, rng):
        a = make_spd(rng, 6)
        q1 = sym_eig(a).eigenvectors
        q2 = sym_eig(a.copy()).eigenvectors
        np.testing.assert_array_equal(q1, q2)
        for j in range(6):
            assert q1[np.argmax(np.abs(q1[:, j])), j] > 0

    def test_nonfinite_rejected(self):
        a = np.eye(3)
        a[0, 0] = np.nan
        with pytest.raises(InvalidInput):
            sym_eig(a)

    def test_asymmetric_rejected(self, rng):
        a = rng.standard_normal((4, 4))
        with pytest.raises(InvalidInput):
            sym_eig(a)

    def test_schur_alias(self, rng):
        a = make_spd(rng, 4)
        e1, e2 = sym_eig(a), schur_sym(a)
        np.testing.assert_array_equal(e1.eigenvalues, e2.eigenvalues)
        np.testing.assert_array_equal(e1.eigenvectors, e2.eigenvectors)


class TestSpdPower:
    def test_diagonal_sqrt(self):
        np.testing.assert_allclose(
            spd_power(np.diag([4.0, 9.0]), 0.5), np.diag([2.0, 3.0]), atol=1e-12
        )

    def test_inverse_against_solve(self, rng):
        a = make_spd(rng, 5)
        inv = spd_power(a, -1.0)
        oracle = np.linalg.solve(a, np.eye(5))
        assert np.linalg.norm(inv - oracle) <= 1e-10 * np.linalg.norm(oracle)

    def test_square_against_product(self, rng):
        a = make_spd(rng, 5)
        oracle = a @ a
        assert np.linalg.norm(spd_power(a, 2.0) - oracle) <= 1e-10 * np.linalg.norm(oracle)

    def test_identity_cases(self, rng):
        a = make_spd(rng, 3)
        np.testing.assert_allclose(spd_power(a, 1.0), a, rtol=0, atol=1e-13)
        np.testing.assert_allclose(spd_power(a, 0.0), np.eye(3), atol=1e-14)

    def test_not_pd_rejected(self):
        with pytest.raises(NotPositiveDefinite):
            spd_power(np.diag([1.0, -1.0]), 0.5)

    @settings(max_examples=25, deadline=None)
    @given(
        seed=st.integers(0, 10_000),
        p=st.floats(-2.0, 2.0),
        q=st.floats(-2.0, 2.0),
    )
    def test_power_composition(self, seed, p, q):
        a = make_spd(np.random.default_rng(seed), 4)
        left = spd_power(spd_power(a, p), q)
        right = spd_power(a, p * q)
        assert np.linalg.norm(left - right) <= 1e-8 * (1 + np.linalg.norm(right))


class TestLogExp:
    def test_log_identity(self):
        np.testing.assert_allclose(spd_log(np.eye(4)), np.zeros((4, 4)), atol=1e-14)

    def test_exp_zero(self):
        np.testing.assert_allclose(spd_exp(np.zeros((4, 4))), np.eye(4), atol=1e-14)

    def test_round_trip(self, rng):
        a = make_spd(rng, 6)
        back = spd_exp(spd_log(a))
        assert np.linalg.norm(back - a) <= 1e-9 * np.linalg.norm(a)

    def test_sqrt_invsqrt(self, rng):
        a = make_spd(rng, 4)
        np.testing.assert_allclose(spd_sqrt(a) @ spd_sqrt(a), a, atol=1e-10)
        np.testing.assert_allclose(spd_invsqrt(a) @ a @ spd_invsqrt(a), np.eye(4), atol=1e-10)


class TestGenEigvals:
    def test_equal_args(self, rng):
        a = make_spd(rng, 4)
        np.testing.assert_allclose(gen_eigvals(a, a), np.ones(4), atol=1e-12)

    def test_diagonal(self):
        np.testing.assert_allclose(
            gen_eigvals(np.diag([2.0, 1.0]), np.eye(2)), [1.0, 2.0], atol=1e-14
        )

    def test_against_nonsymmetric_solve(self, rng):
        x, y = make_spd(rng, 5), make_spd(rng, 5)
        lam = gen_eigvals(x, y)
        oracle = np.sort(np.linalg.eigvals(np.linalg.solve(y, x)).real)
        assert np.max(np.abs(lam - oracle)) <= 1e-9 * np.max(np.abs(oracle))

    def test_reciprocal_reversal(self, rng):
        x, y = make_spd(rng, 5), make_spd(rng, 5)
        fwd = gen_eigvals(x, y)
        rev = gen_eigvals(y, x)
        np.testing.assert_allclose(fwd, 1.0 / rev[::-1], rtol=1e-9)

    def test_dim_mismatch(self):
        with pytest.raises(DimensionMismatch):
            gen_eigvals(np.eye(3), np.eye(2))


class TestRegularize:
    def test_default_shift(self):
        a = np.diag([1.0, 3.0])
        out = regularize(a)
        np.testing.assert_allclose(out, a + 1e-8 * 2.0 * np.eye(2))

    def test_repairs_semidefinite(self):
        a = np.diag([1.0, 0.0])
        assert not is_spd(a)
        assert is_spd(regularize(a, 1e-6))
