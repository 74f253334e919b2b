import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ymlab import operators as O
from ymlab import soliton as S
from ymlab.analysis import growth_check_field
from ymlab.liealg import sigma_all

from conftest import DIMS, random_points


def test_constants_n5_closed_form():
    p = S.constants(5)
    assert p.a == pytest.approx(np.sqrt(3) / (2 * np.sqrt(2)), abs=1e-15)
    assert p.b == pytest.approx((18 - 7 * np.sqrt(6)) / 2, abs=1e-14)
    assert p.a == pytest.approx(0.6123724357, abs=1e-10)
    assert p.b == pytest.approx(0.4267860, abs=1e-7)
    assert 2 * p.a - 1 > 0


@pytest.mark.parametrize("n", DIMS)
def test_b_positive(n):
    p = S.constants(n)
    assert p.b > 0 and 2 * p.a - 1 > 0


@pytest.mark.parametrize("n", [4, 10])
def test_constants_range_guard(n):
    with pytest.raises(ValueError):
        S.constants(n)


def test_params_reject_nonpositive_b():
    with pytest.raises(ValueError):
        S.SolitonParams(5, 0.6, -0.1)


def test_W_zero_at_origin_and_decay():
    p = S.constants(6)
    assert np.all(S.W(np.zeros(6), p) == 0)
    e = np.eye(6)[2]
    R = np.array([1e3, 1e4])
    norms = [np.sqrt(np.sum(S.W(r * e, p)[0] ** 2)) for r in R]
    assert np.log(norms[1] / norms[0]) / np.log(10) == pytest.approx(-1.0, abs=1e-5)


@pytest.mark.parametrize("n", DIMS)
def test_W_jet_matches_finite_differences(n, rng):
    p = S.constants(n)
    for y in rng.normal(size=(3, n)) * 2:
        exact = S.W_jet(y, p)
        fd = O.finite_diff_jet(lambda z: S.W(z, p), y, 1e-3)
        np.testing.assert_allclose(fd.grad, exact.grad, atol=1e-7)
        np.testing.assert_allclose(fd.hess, exact.hess, atol=1e-7)


def test_W_third_derivatives_match_fd_of_hessian(rng):
    p = S.constants(5)
    y = rng.normal(size=5)
    third = S.W_jet(y, p, order=3).third
    h = 1e-4
    for k in range(5):
        d = np.zeros(5)
        d[k] = h
        fd = (S.W_jet(y + d, p).hess - S.W_jet(y - d, p).hess) / (2 * h)
        np.testing.assert_allclose(third[k], fd, atol=1e-7)


def test_spacetime_soliton(rng):
    p = S.constants(5)
    x = rng.normal(size=5)
    np.testing.assert_allclose(S.spacetime_soliton(x, 0.0, p), S.W(x, p), atol=1e-15)
    with pytest.raises(ValueError):
        S.spacetime_soliton(x, 1.0, p)


@given(st.floats(0.05, 3.0), st.floats(0.01, 0.99), st.integers(0, 2**31))
def test_spacetime_scale_invariance(lam, s, seed):
    p = S.constants(5)
    x = np.random.default_rng(seed).normal(size=5)
    if lam * lam * s >= 1:
        return
    lhs = S.spacetime_soliton(x, 1 - s, p)
    rhs = lam * S.spacetime_soliton(lam * x, 1 - lam * lam * s, p)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12)


def test_curvature_sup_times_gap_is_constant():
    # F of the self-similar profile at (x, t) is (1-t)^{-1} F_W(x / sqrt(1-t))
    p = S.constants(5)
    rs = np.linspace(0.0, 6.0, 601)

    def sup_at(t):
        L = np.sqrt(1 - t)
        vals = []
        for r in rs:
            x = np.array([r * L, 0, 0, 0, 0])
            jet = S.W_jet(x / L, p)
            F = O.curvature(jet) / (1 - t)
            vals.append(np.sqrt(np.sum(F**2, axis=(-2, -1))).max())
        return max(vals)

    ratios = [(1 - t) * sup_at(t) for t in (0.0, 0.5, 0.99)]
    np.testing.assert_allclose(ratios, ratios[0], rtol=1e-12)


def test_soliton_residual_origin():
    assert np.abs(S.soliton_residual(np.zeros(5), 5)).max() < 1e-12


@pytest.mark.parametrize("n", DIMS)
def test_soliton_residual_random_points(n, rng):
    for y in random_points(rng, 100, n):
        assert np.sqrt(np.sum(S.soliton_residual(y, n) ** 2)) < 1e-9


def test_soliton_residual_negative_control(rng):
    p = S.constants(5).perturbed(da=0.01)
    worst = max(np.sqrt(np.sum(S.soliton_residual(y, p) ** 2)) for y in random_points(rng, 20, 5))
    assert worst > 1e-4


@pytest.mark.parametrize("n", DIMS)
def test_g_two_forms_agree(n, rng):
    p = S.constants(n)
    C = S.fit_g_constant(rng.normal(size=n), p)
    assert C == pytest.approx(2 * p.b, rel=1e-12)
    for y in rng.normal(size=(10, n)) * 3:
        closed = S.eigenfunction_g(y, p)
        defn = S.eigenfunction_g(y, p, form="definition")
        np.testing.assert_allclose(defn.value, closed.value, atol=1e-13)
        np.testing.assert_allclose(defn.grad, closed.grad, atol=1e-13)
        np.testing.assert_allclose(defn.hess, closed.hess, atol=1e-12)
        np.testing.assert_allclose(closed.value, C * sigma_all(y) / p.q(y @ y) ** 2, atol=1e-13)


@pytest.mark.parametrize("n", DIMS)
def test_explicit_eigenpairs(n, rng):
    p = S.constants(n)
    for y in random_points(rng, 30, n):
        g = S.eigenfunction_g(y, p)
        Lg = O.linearized_L(g, y, p)
        assert np.linalg.norm(Lg - g.value) <= 1e-8 * np.linalg.norm(g.value) + 1e-14
        for alpha in range(1, n + 1):
            Fa = S.eigenfunction_F(alpha, y, p)
            LF = O.linearized_L(Fa, y, p)
            assert np.linalg.norm(LF - 0.5 * Fa.value) <= 1e-8 * np.linalg.norm(Fa.value) + 1e-14


def test_eigenfunction_F_is_curvature_row(rng):
    p = S.constants(7)
    y = rng.normal(size=7)
    F = O.curvature(S.W_jet(y, p))
    for alpha in range(1, 8):
        np.testing.assert_allclose(S.eigenfunction_F(alpha, y, p).value, F[alpha - 1], atol=1e-15)
    with pytest.raises(ValueError):
        S.eigenfunction_F(8, y, p)


@pytest.mark.parametrize("n", [5, 8])
def test_eigenfunction_F_jet_matches_generic_curvature_jet(n, rng):
    # closed-form row jet against the Leibniz-rule route through third derivatives
    p = S.constants(n)
    y = 3.0 * rng.normal(size=n)
    _, dF, ddF = O.curvature_jet(S.W_jet(y, p, order=3))
    for alpha in range(1, n + 1):
        Fa = S.eigenfunction_F(alpha, y, p)
        np.testing.assert_allclose(Fa.grad, dF[:, alpha - 1], atol=1e-14)
        np.testing.assert_allclose(Fa.hess, ddF[:, :, alpha - 1], atol=1e-14)


def test_explicit_families_growth_slopes():
    p = S.constants(5)
    e = np.eye(5)[0]
    g = growth_check_field(lambda r: np.linalg.norm(S.eigenfunction_g(r * e, p).value), -1.0, 100.0)
    assert g.slope == pytest.approx(-3.0, abs=0.05)
    d = np.ones(5) / np.sqrt(5)
    f = growth_check_field(lambda r: np.linalg.norm(S.eigenfunction_F(2, r * d, p).value), -0.5, 100.0)
    assert f.slope == pytest.approx(-2.0, abs=0.05)


@pytest.mark.parametrize("R", [5.0, 10.0, 50.0])
def test_curvature_F23_formula(R):
    p = S.constants(5)
    F = O.curvature(S.W_jet(np.array([-R, 0, 0, 0, 0]), p))
    assert np.linalg.norm(F[1, 2]) == pytest.approx(S.curvature_F23_at(R, p), abs=1e-10)


@pytest.mark.parametrize("n", DIMS)
def test_curvature_F23_positive_and_quadratic_decay(n):
    p = S.constants(n)
    R = np.geomspace(0.1, 1e3, 30)
    vals = np.array([S.curvature_F23_at(r, p) for r in R])
    assert np.all(vals > 0)
    assert vals[-1] * R[-1] ** 2 == pytest.approx(np.sqrt(2) * (2 * p.a - 1) / p.a**2, rel=1e-4)
    with pytest.raises(ValueError):
        S.curvature_F23_at(0.0, p)
