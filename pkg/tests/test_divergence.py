import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spdkit.divergence import (
    PARAM_FLOOR,
    AbldParams,
    abld,
    abld_airm,
    burg,
    degeneracy_margin,
    jbld,
    jeffreys_kl,
)
from spdkit.errors import InvalidInput

from conftest import make_invertible, make_spd, make_spd_pair

X21 = np.diag([2.0, 1.0])
I2 = np.eye(2)


def eigen_oracle(lam, alpha, beta):
    """Scalar transcription of the eigenvalue form, summed by hand."""
    total = 0.0
    for lv in lam:
        total += np.log(alpha * lv ** beta + beta * lv ** (-alpha))
    return (total - len(lam) * np.log(alpha + beta)) / (alpha * beta)


class TestAbld:
    def test_identity_of_indiscernibles(self, rng):
        x = make_spd(rng, 4)
        assert abs(abld(x, x, 0.7, 1.9)) <= 1e-10

    def test_unit_parameters(self):
        # oracle: per eigenvalue log((lam + 1/lam)/2); lam = (2, 1)
        expected = eigen_oracle([2.0, 1.0], 1.0, 1.0)
        assert abs(expected - 0.22314355131420976) < 1e-15
        assert abs(abld(X21, I2, 1.0, 1.0) - expected) <= 1e-12

    def test_half_parameters_match_jbld(self):
        expected = eigen_oracle([2.0, 1.0], 0.5, 0.5)
        assert abs(expected - 0.23556607131276738) < 1e-14
        got = abld(X21, I2, 0.5, 0.5)
        assert abs(got - expected) <= 1e-12
        assert abs(got - 4.0 * jbld(X21, I2)) <= 1e-12

    def test_rejects_nonpositive_parameters(self):
        for a, b in ((0.0, 1.0), (1.0, 0.0), (-1.0, 1.0)):
            with pytest.raises(InvalidInput):
                abld(X21, I2, a, b)

    def test_nonnegative_on_random_pairs(self, rng):
        for _ in range(200):
            d = int(rng.integers(2, 6))
            x, y = make_spd_pair(rng, d)
            a, b = rng.uniform(PARAM_FLOOR, 3.0, size=2)
            assert abld(x, y, a, b) >= -1e-12

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10_000),
           a=st.floats(0.05, 3.0), b=st.floats(0.05, 3.0))
    def test_dual_symmetry(self, seed, a, b):
        x, y = make_spd_pair(np.random.default_rng(seed), 4)
        assert abs(abld(x, y, a, b) - abld(y, x, b, a)) <= 1e-10

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_affine_invariance(self, seed):
        gen = np.random.default_rng(seed)
        x, y = make_spd_pair(gen, 4)
        m = make_invertible(gen, 4)
        base = abld(x, y, 0.8, 1.4)
        moved = abld(m @ x @ m.T, m @ y @ m.T, 0.8, 1.4)
        assert abs(base - moved) <= 1e-8 * (1 + abs(base))


class TestAirm:
    def test_zero_at_equal(self, rng):
        x = make_spd(rng, 3)
        assert abs(abld_airm(x, x)) <= 1e-12

    def test_known_value(self):
        # Exact origin limit of the family carries a factor 1/2 relative to
        # the squared geodesic distance: oracle is half the squared Frobenius
        # norm of the matrix log of X^-1/2 Y X^-1/2, here 0.5 * log(2)^2.
        w = np.linalg.eigvalsh(np.diag([1 / np.sqrt(2), 1.0]) @ I2
                               @ np.diag([1 / np.sqrt(2), 1.0]))
        oracle = 0.5 * np.sum(np.log(w) ** 2)
        assert abs(oracle - 0.2402265069591007) < 1e-15
        assert abs(abld_airm(X21, I2) - oracle) <= 1e-12

    def test_symmetry(self, rng):
        x, y = make_spd_pair(rng, 4)
        assert abs(abld_airm(x, y) - abld_airm(y, x)) <= 1e-10

    def test_small_parameter_limit(self, rng):
        eps = 1e-4
        for _ in range(20):
            x, y = make_spd_pair(rng, 5)
            assert abs(abld(x, y, eps, eps) - abld_airm(x, y)) <= 1e-3

    def test_affine_invariance(self, rng):
        x, y = make_spd_pair(rng, 4)
        m = make_invertible(rng, 4)
        base = abld_airm(x, y)
        moved = abld_airm(m @ x @ m.T, m @ y @ m.T)
        assert abs(base - moved) <= 1e-8 * (1 + abs(base))


class TestNamedForms:
    def test_zero_at_equal(self, rng):
        x = make_spd(rng, 3)
        for fn in (jbld, jeffreys_kl, burg):
            assert abs(fn(x, x)) <= 1e-12

    def test_burg_value(self):
        # oracle: tr(diag(2,1)) - log(2) - 2 = 1 - log 2
        assert abs(burg(X21, I2) - (1.0 - np.log(2.0))) <= 1e-12

    def test_jeffreys_value(self):
        # oracle: 0.5 * (3 + 1.5) - 2
        assert abs(jeffreys_kl(X21, I2) - 0.25) <= 1e-12

    def test_positive_on_random(self, rng):
        for _ in range(50):
            x, y = make_spd_pair(rng, 4)
            assert jbld(x, y) > 0
            assert jeffreys_kl(x, y) > 0
            assert burg(x, y) > 0

    def test_burg_as_small_beta_limit(self, rng):
        # oracle: per-eigenvalue limit 1/lam + log(lam) - 1
        for _ in range(20):
            x, y = make_spd_pair(rng, 4)
            assert abs(abld(x, y, 1.0, 1e-4) - burg(y, x)) <= 1e-3


class TestDegeneracyMargin:
    def test_degenerate_example(self):
        # eig(X^-1 Y) = (2,); alpha=1, beta=-0.5 gives bound |1/-0.5|^2 = 4.
        slack = degeneracy_margin(np.eye(1), np.array([[2.0]]), 1.0, -0.5)
        np.testing.assert_allclose(slack, [-2.0], atol=1e-12)

    def test_boundary_is_zero_slack(self):
        bound = abs(1.0 / -0.5) ** (1.0 / 0.5)
        slack = degeneracy_margin(np.eye(1), np.array([[bound]]), 1.0, -0.5)
        np.testing.assert_allclose(slack, [0.0], atol=1e-10)

    def test_negative_alpha_branch(self):
        # alpha=-0.5, beta=1: bound |1/-0.5|^2 = 4; slack = bound - lam.
        slack = degeneracy_margin(np.eye(1), np.array([[2.0]]), -0.5, 1.0)
        np.testing.assert_allclose(slack, [2.0], atol=1e-12)

    def test_sum_zero_rejected(self):
        with pytest.raises(InvalidInput):
            degeneracy_margin(np.eye(2), X21, 1.0, -1.0)

    def test_same_sign_rejected(self):
        with pytest.raises(InvalidInput):
            degeneracy_margin(np.eye(2), X21, 1.0, 2.0)


class TestAbldParams:
    def test_modes(self):
        p = AbldParams.scalar(0.5, 1.5, 4)
        assert p.mode == "S" and p.n == 4
        p = AbldParams.tied([1.0, 2.0])
        assert np.array_equal(p.alpha, p.beta)
        p = AbldParams.airm(3)
        assert p.is_airm and np.all(p.alpha == 0)
        p = AbldParams.burg(3)
        assert np.all(p.alpha == 1.0) and np.all(p.beta == 1.0)

    def test_floor_enforced(self):
        with pytest.raises(InvalidInput):
            AbldParams.scalar(1e-5, 1.0, 2)

    def test_mode_constraints(self):
        with pytest.raises(InvalidInput):
            AbldParams(np.array([1.0, 2.0]), np.array([1.0, 2.0]), "S")
        with pytest.raises(InvalidInput):
            AbldParams(np.array([1.0, 2.0]), np.array([1.0, 1.0]), "V")
        with pytest.raises(InvalidInput):
            AbldParams(np.array([1.0]), np.array([2.0]), "B")

    def test_immutable(self):
        p = AbldParams.burg(2)
        with pytest.raises(ValueError):
            p.alpha[0] = 3.0
