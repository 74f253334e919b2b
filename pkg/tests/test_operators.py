import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ymlab import operators as O
from ymlab import soliton as S
from ymlab.equivariant import radial_extract
from ymlab.jets import OneFormJet, scalar_times_jet, sigma_radial_jet, zero_jet
from ymlab.liealg import random_so

from conftest import DIMS, random_points


def _jet_norm(a):
    return float(np.sqrt(np.sum(np.asarray(a) ** 2)))


def test_curvature_trivial_cases(rng):
    n = 5
    assert np.all(O.curvature(zero_jet(n)) == 0)
    A = random_so(n, rng, n)
    const = OneFormJet(A, np.zeros((n,) * 4), np.zeros((n,) * 5))
    F = O.curvature(const)
    for i in range(n):
        for j in range(n):
            np.testing.assert_allclose(F[i, j], A[i] @ A[j] - A[j] @ A[i], atol=1e-15)


def test_curvature_antisymmetric(rng):
    u = O.random_analytic_field(6, rng)(rng.normal(size=6))
    F = O.curvature(u)
    np.testing.assert_allclose(F, -np.swapaxes(F, 0, 1), atol=1e-15)


def test_curvature_of_W_at_minus_5e1():
    p = S.constants(5)
    F = O.curvature(S.W_jet(np.array([-5.0, 0, 0, 0, 0]), p))
    assert _jet_norm(F[1, 2]) == pytest.approx(S.curvature_F23_at(5.0, p), abs=1e-12)


def test_curvature_jet_derivatives_match_fd(rng):
    p = S.constants(5)
    y = rng.normal(size=5)
    F, dF, ddF = O.curvature_jet(S.W_jet(y, p, order=3))
    h = 1e-4
    for k in range(5):
        d = np.zeros(5)
        d[k] = h
        fd = (O.curvature(S.W_jet(y + d, p)) - O.curvature(S.W_jet(y - d, p))) / (2 * h)
        np.testing.assert_allclose(dF[k], fd, atol=1e-7)
        fd2 = (O.curvature_jet(S.W_jet(y + d, p))[1] - O.curvature_jet(S.W_jet(y - d, p))[1]) / (2 * h)
        np.testing.assert_allclose(ddF[k], fd2, atol=1e-7)


def test_connection_context_background(rng):
    ctx = O.ConnectionContext(6)
    y = rng.normal(size=6)
    Wj, F, _ = ctx.at(y)
    np.testing.assert_allclose(F, O.curvature(S.W_jet(y, 6)), atol=1e-10)
    assert ctx.n == 6


def test_codifferential_zero_and_soliton_form(rng):
    n = 5
    p = S.constants(n)
    jet = zero_jet(n)
    assert np.all(O.codifferential(jet, np.zeros((n,) * 4), np.zeros((n,) * 5)) == 0)
    y = rng.normal(size=n) * 3
    Wj = S.W_jet(y, p, order=3)
    F, dF, _ = O.curvature_jet(Wj)
    np.testing.assert_allclose(O.codifferential(Wj, F, dF), -0.5 * np.einsum("i,ijab->jab", y, F),
                               atol=1e-12)


@pytest.mark.parametrize("n", [5, 8])
def test_codifferential_of_equivariant_oneform_vanishes(n, rng):
    for _ in range(10):
        y = rng.normal(size=n) * 2
        B = sigma_radial_jet(y, list(rng.normal(size=3)))
        u = sigma_radial_jet(y, list(rng.normal(size=3)))
        assert np.abs(O.codifferential_oneform(B, u)).max() < 1e-12


def test_linearized_L_zero():
    assert np.all(O.linearized_L(zero_jet(5), np.ones(5), 5) == 0)


@pytest.mark.parametrize("n", DIMS)
def test_flow_identity(n, rng):
    p = S.constants(n)
    for y in random_points(rng, 20, n):
        u = O.random_analytic_field(n, rng)(y)
        B = S.W_jet(y, p).truncated() + u
        lhs = O.rescaled_rhs(B, u, y)
        rhs = O.linearized_L(u, y, p) + O.nonlinear_N(u, y, p)
        assert np.abs(lhs - rhs).max() < 1e-9


def test_rescaled_rhs_vanishes_at_soliton(rng):
    p = S.constants(5)
    for y in random_points(rng, 50, 5):
        assert np.abs(O.rescaled_rhs(S.W_jet(y, p).truncated(), zero_jet(5), y)).max() < 1e-9


def test_rescaled_rhs_linearization_ratio(rng):
    p = S.constants(5)
    y = rng.normal(size=5) * 2
    u = O.random_analytic_field(5, rng)(y)
    W = S.W_jet(y, p).truncated()
    errs = []
    for eps in (1e-2, 1e-3):
        ue = u.scaled(eps)
        errs.append(_jet_norm(O.rescaled_rhs(W + ue, ue, y) - eps * O.linearized_L(u, y, p)))
    assert errs[0] / errs[1] == pytest.approx(100.0, rel=0.05)


def test_nonlinear_N_polynomial_structure(rng):
    p = S.constants(6)
    y = rng.normal(size=6)
    u = O.random_analytic_field(6, rng)(y)
    assert np.all(O.nonlinear_N(zero_jet(6), y, p) == 0)
    ts = np.array([-2.0, -1.0, 1.0, 2.0, 3.0])
    vals = np.stack([O.nonlinear_N(u.scaled(t), y, p).ravel() for t in ts])
    V = np.vander(ts, 4, increasing=True)              # 1, t, t^2, t^3
    coef, *_ = np.linalg.lstsq(V, vals, rcond=None)
    scale = np.abs(vals).max()
    assert np.abs(coef[:2]).max() < 1e-9 * scale
    assert np.abs(V @ coef - vals).max() < 1e-9 * scale


@pytest.mark.parametrize("n", DIMS)
def test_conjugation_identity(n, rng):
    p = S.constants(n)
    for y in random_points(rng, 20, n):
        u = O.random_analytic_field(n, rng)(y)
        s = y @ y
        f0 = np.exp(-s / 8)
        phi = scalar_times_jet(f0, -y / 4 * f0, (-np.eye(n) / 4 + np.outer(y, y) / 16) * f0, u)
        lhs = O.schrodinger_A(phi, y, p)
        rhs = -f0 * O.linearized_L(u, y, p)
        assert np.linalg.norm(lhs - rhs) <= 1e-8 * max(np.linalg.norm(rhs), 1e-300) + 1e-14


def test_schrodinger_zero_and_small_potential(rng):
    p = S.constants(5)
    assert np.all(O.schrodinger_A(zero_jet(5), np.ones(5), p) == 0)
    y = rng.normal(size=5)
    y *= 0.09 / np.linalg.norm(y)
    assert (y @ y) / 16 < 1e-3


def test_deturck_examples(rng):
    p = S.constants(5)
    y = rng.normal(size=5) * 2
    Wj = S.W_jet(y, p, order=3)
    F = O.curvature(Wj)
    np.testing.assert_allclose(O.deturck_rhs(Wj, zero_jet(5)), 0.5 * np.einsum("i,ijab->jab", y, F),
                               atol=1e-12)
    # equivariant phi: the gauge term drops and the flow is plain Yang-Mills
    phi = sigma_radial_jet(y, list(rng.normal(size=3)))
    psi = Wj.truncated() + phi
    Fp, dFp, _ = O.curvature_jet(psi)
    np.testing.assert_allclose(O.deturck_rhs(psi, phi), -O.codifferential(psi, Fp, dFp), atol=1e-12)


@pytest.mark.parametrize("n", [5, 9])
def test_chain_rule_through_similarity(n, rng):
    p = S.constants(n)
    for y in random_points(rng, 20, n, 6.0):
        tau = rng.uniform(0, 4)
        u = O.random_analytic_field(n, rng)(y)
        B = S.W_jet(y, p).truncated() + u
        np.testing.assert_allclose(O.rescaled_rhs_via_physical(B, u, y, tau), O.rescaled_rhs(B, u, y),
                                   atol=1e-8)


def test_similarity_points_round_trip(rng):
    assert O.to_similarity_point(np.ones(5), 0.0)[1] == 0.0
    np.testing.assert_array_equal(O.to_similarity_point(np.ones(5), 0.0)[0], np.ones(5))
    for _ in range(20):
        x = rng.normal(size=5)
        t = rng.uniform(-1, 0.999)
        y, tau = O.to_similarity_point(x, t)
        if tau < 0:
            continue
        x2, t2 = O.to_physical_point(y, tau)
        np.testing.assert_allclose(x2, x, rtol=1e-14, atol=1e-14)
        assert t2 == pytest.approx(t, abs=1e-14)
    with pytest.raises(ValueError):
        O.to_similarity_point(np.ones(5), 1.0)


def test_similarity_transform_of_soliton_is_stationary(rng):
    p = S.constants(5)
    u = O.similarity_transform(lambda x, t: S.spacetime_soliton(x, t, p))
    y = rng.normal(size=5)
    for tau in (0.0, 1.0, 5.0):
        np.testing.assert_allclose(u(y, tau), S.W(y, p), rtol=1e-12, atol=1e-14)
    back = O.similarity_transform(u, inverse=True)
    x = rng.normal(size=5)
    np.testing.assert_allclose(back(x, 0.3), S.spacetime_soliton(x, 0.3, p), rtol=1e-14)
    with pytest.raises(ValueError):
        back(x, 1.0)


@given(st.integers(0, 2**31))
def test_similarity_transform_round_trip_random_field(seed):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(3, 5))

    def phi(x, t):
        return np.tanh(M @ np.append(x, t))

    there = O.similarity_transform(phi)
    back = O.similarity_transform(there, inverse=True)
    x = rng.normal(size=4)
    t = rng.uniform(0, 0.9)
    np.testing.assert_allclose(back(x, t), phi(x, t), rtol=1e-14, atol=1e-14)


def test_equivariant_L_stays_in_ansatz(rng):
    p = S.constants(5)
    for _ in range(10):
        y = rng.normal(size=5) * 2
        u = sigma_radial_jet(y, list(rng.normal(size=3)))
        _, res = radial_extract(O.linearized_L(u, y, p), y)
        assert res < 1e-9


def test_fd_jet_exact_on_quadratic(rng):
    n = 5
    A = random_so(n, rng, (n, n, n))        # value_j = sum_kl A[j,k,l] y_k y_l

    def f(z):
        return np.einsum("jkl...,k,l->j...", A, z, z)

    y = rng.normal(size=n)
    jet = O.finite_diff_jet(f, y, 0.1)
    grad = np.einsum("jklab,l->kjab", A, y) + np.einsum("jlkab,l->kjab", A, y)
    hess = np.einsum("jklab->kljab", A) + np.einsum("jlkab->kljab", A)
    np.testing.assert_allclose(jet.grad, grad, atol=1e-12)
    np.testing.assert_allclose(jet.hess, hess, atol=1e-11)


def test_fd_jet_order_on_quintic(rng):
    # the stencil is exact on quartics, so a quintic exposes the h^4 term
    M = random_so(5, rng, 5)

    def f(z):
        return M * (z[0] ** 5 + z[1] ** 5)

    y = rng.normal(size=5)
    exact = 5 * y[0] ** 4 * M
    errs = [np.abs(O.finite_diff_jet(f, y, h).grad[0] - exact).max() for h in (0.1, 0.05)]
    assert errs[0] / errs[1] == pytest.approx(16.0, rel=0.05)


def test_fd_jet_on_W_and_validation(rng):
    p = S.constants(5)
    y = rng.normal(size=5)
    fd = O.finite_diff_jet(lambda z: S.W(z, p), y, 1e-3)
    ex = S.W_jet(y, p)
    assert np.abs(fd.grad - ex.grad).max() < 1e-7
    assert np.abs(fd.hess - ex.hess).max() < 1e-7
    np.testing.assert_allclose(fd.hess, np.swapaxes(fd.hess, 0, 1), atol=1e-10)
    with pytest.raises(ValueError):
        O.finite_diff_jet(lambda z: S.W(z, p), y, 0.0)


def test_random_analytic_field_jet_matches_fd(rng):
    field = O.random_analytic_field(6, rng)
    y = rng.normal(size=6)
    jet = field(y)
    fd = O.finite_diff_jet(lambda z: field(z).value, y, 1e-3)
    np.testing.assert_allclose(fd.grad, jet.grad, atol=1e-8)
    np.testing.assert_allclose(fd.hess, jet.hess, atol=1e-7)
