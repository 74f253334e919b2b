"""Pointwise differential operators acting on one-form jets.

Conventions (flat R^n, every repeated index summed explicitly):

* curvature        F_ij = d_i A_j - d_j A_i + [A_i, A_j]
* codifferential   (D_A^* F)_j = -sum_i (d_i F_ij + [A_i, F_ij])
* on one-forms     D_A^* phi  = -sum_i (d_i phi_i + [A_i, phi_i])
* on 0-forms       (D_A s)_j  = d_j s + [A_j, s]

With these signs the soliton identity D_W^* F_W + (1/2) y^i F_W,ij = 0 and
both explicit eigenpairs of L hold at once, which pins the convention.
"""

from __future__ import annotations

from typing import Callable, Optional, Tuple

import numpy as np

from .jets import OneFormJet


def _comm(X, Y):
    return X @ Y - Y @ X


def _is_antisymmetric(X) -> bool:
    return bool(np.array_equal(X, -np.swapaxes(X, -1, -2)))


def _outer_comm(X, Y):
    """All commutators [X_a, Y_b] for stacks X (*a, m, m) and Y (*b, m, m).

    Returns shape (*a, *b, m, m). For so(n)-valued stacks YX is the transpose
    of XY, which halves the work; jets built from sigma are antisymmetric to
    the last bit, so the exact check below almost always succeeds.
    """
    sa, sb, m = X.shape[:-2], Y.shape[:-2], X.shape[-1]
    Xf = X.reshape(-1, 1, m, m)
    Yf = Y.reshape(1, -1, m, m)
    XY = np.matmul(Xf, Yf)
    if _is_antisymmetric(X) and _is_antisymmetric(Y):
        out = XY - np.swapaxes(XY, -1, -2)
    else:
        out = XY - np.matmul(Yf, Xf)
    return out.reshape(sa + sb + (m, m))


def _background(y, params):
    """Jet of W and its curvature with one derivative."""
    from .soliton import curvature_data

    Wj, F, dF, _ = curvature_data(y, params)
    return Wj.truncated(), F, dF


class ConnectionContext:
    """Background data (W and F_W) for the linearization around the soliton."""

    def __init__(self, params):
        from .soliton import _params

        self.params = _params(params)

    @property
    def n(self) -> int:
        return self.params.n

    def at(self, y):
        return _background(np.asarray(y, dtype=float), self.params)


def curvature(A: OneFormJet) -> np.ndarray:
    """F[i, j] = d_i A_j - d_j A_i + [A_i, A_j], shape (n, n, n, n)."""
    g = A.grad
    v = A.value
    return g - np.swapaxes(g, 0, 1) + _outer_comm(v, v)


def curvature_jet(A: OneFormJet) -> Tuple[np.ndarray, np.ndarray, Optional[np.ndarray]]:
    """Curvature with its first (and, for third-order jets, second) derivatives.

    Returns ``(F[i,j], dF[k,i,j], ddF[k,l,i,j])``; the last entry is None when
    the jet carries no third derivatives.
    """
    v, g, h = A.value, A.grad, A.hess
    F = curvature(A)
    dF = (h - np.swapaxes(h, 1, 2)
          + _outer_comm(g, v) + np.swapaxes(_outer_comm(v, g), 0, 1))
    ddF = None
    if A.third is not None:
        t = A.third
        gg = _outer_comm(g, g)                   # [g_ki, g_lj] at (k, i, l, j)
        ddF = (t - np.swapaxes(t, 2, 3)
               + _outer_comm(h, v)
               + gg.transpose(0, 2, 1, 3, 4, 5)
               + gg.transpose(2, 0, 1, 3, 4, 5)
               + np.moveaxis(_outer_comm(v, h), 0, 2))
    return F, dF, ddF


def codifferential(A: OneFormJet, F: np.ndarray, dF: np.ndarray) -> np.ndarray:
    """(D_A^* F)_j = -sum_i (d_i F_ij + [A_i, F_ij])."""
    div = np.einsum("iijab->jab", dF)
    return -(div + _comm(A.value[:, None], F).sum(axis=0))


def codifferential_oneform(A: OneFormJet, phi: OneFormJet) -> np.ndarray:
    """D_A^* phi = -sum_i (d_i phi_i + [A_i, phi_i]) as a single matrix."""
    return -(phi.divergence() + _comm(A.value, phi.value).sum(axis=0))


def codifferential_oneform_grad(A: OneFormJet, phi: OneFormJet) -> np.ndarray:
    """Gradient d_j (D_A^* phi), shape (n, n, n)."""
    second = np.einsum("jiiab->jab", phi.hess)
    cross = (_comm(A.grad, phi.value[None, :]).sum(axis=1)
             + _comm(A.value[None, :], phi.grad).sum(axis=1))
    return -(second + cross)


def covariant_d0(A: OneFormJet, s: np.ndarray, ds: np.ndarray) -> np.ndarray:
    """(D_A s)_j = d_j s + [A_j, s] for an so(n)-valued function s."""
    return ds + _comm(A.value, s[None])


def linearized_L(u: OneFormJet, y, params) -> np.ndarray:
    """Linearization of the rescaled flow at W applied to the jet u."""
    y = np.asarray(y, dtype=float)
    Wj, FW, _ = _background(y, params)
    Wv = Wj.value
    lap = u.laplacian()
    radial = np.einsum("k,kjab->jab", y, u.grad)
    cross = 2.0 * _comm(Wv[:, None], u.grad).sum(axis=0)
    double = _comm(Wv[:, None], _comm(Wv[:, None], u.value[None, :])).sum(axis=0)
    curv = 2.0 * _comm(u.value[:, None], FW).sum(axis=0)
    return lap - 0.5 * radial - 0.5 * u.value + cross + double + curv


def schrodinger_A(phi: OneFormJet, y, params) -> np.ndarray:
    """Conjugated operator A = -U L U^{-1} with U = multiplication by e^{-|y|^2/8}.

    The potential is (4(n-2) - |y|^2)/16, which is what the conjugation of
    Delta - y.grad/2 - 1/2 produces.
    """
    y = np.asarray(y, dtype=float)
    Wj, FW, _ = _background(y, params)
    n = y.size
    Wv = Wj.value
    pot = (4.0 * (n - 2) - y @ y) / 16.0
    lap = phi.laplacian()
    cross = 2.0 * _comm(Wv[:, None], phi.grad).sum(axis=0)
    double = _comm(Wv[:, None], _comm(Wv[:, None], phi.value[None, :])).sum(axis=0)
    curv = 2.0 * _comm(phi.value[:, None], FW).sum(axis=0)
    return -(lap + pot * phi.value + cross + double + curv)


def nonlinear_N(u: OneFormJet, y, params) -> np.ndarray:
    """Quadratic plus cubic remainder of the rescaled flow around W."""
    y = np.asarray(y, dtype=float)
    Wj, _, _ = _background(y, params)
    Wv, uv = Wj.value, u.value
    # X[i, j] = d_i u_j + [W_i, u_j]
    X = u.grad + _comm(Wv[:, None], uv[None, :])
    t1 = 2.0 * _comm(uv[:, None], X).sum(axis=0)
    # Y[j, i] = d_j u_i + [W_j, u_i]
    Y = u.grad + _comm(Wv[:, None], uv[None, :])
    t2 = _comm(uv[None, :], Y).sum(axis=1)
    t3 = _comm(uv[:, None], _comm(uv[None, :], uv[:, None])).sum(axis=0)
    return t1 - t2 - t3


def rescaled_rhs(B: OneFormJet, u: OneFormJet, y) -> np.ndarray:
    """Right-hand side of the rescaled de-Turck flow for B = W + u."""
    y = np.asarray(y, dtype=float)
    Bv, Bg = B.value, B.grad
    uv, ug = u.value, u.grad
    lap = B.laplacian()
    radial = np.einsum("k,kjab->jab", y, Bg)
    divB = B.divergence()
    t_div = _comm(divB, Bv) + _comm(Bv[:, None], Bg).sum(axis=0)
    Fb = curvature(B)
    t_curv = _comm(Bv[:, None], Fb).sum(axis=0)
    # d_j [B_i, u_i] = [d_j B_i, u_i] + [B_i, d_j u_i]
    t_gauge = (_comm(Bg, uv[None, :]) + _comm(Bv[None, :], ug)).sum(axis=1)
    s = u.divergence() + _comm(Bv, uv).sum(axis=0)
    t_gauge2 = _comm(Bv, s[None])
    return lap - 0.5 * radial - 0.5 * Bv + t_div + t_curv + t_gauge + t_gauge2


def deturck_rhs(psi: OneFormJet, phi: OneFormJet) -> np.ndarray:
    """-D_psi^* F_psi - D_psi D_psi^* phi in physical coordinates."""
    F, dF, _ = curvature_jet(psi.truncated())
    ym = -codifferential(psi, F, dF)
    s = codifferential_oneform(psi, phi)
    ds = codifferential_oneform_grad(psi, phi)
    return ym - covariant_d0(psi, s, ds)


# ---------------------------------------------------------------- similarity


def to_similarity_point(x, t: float):
    """(x, t) -> (y, tau) with y = x/sqrt(1-t), tau = -log(1-t)."""
    if not t < 1.0:
        raise ValueError(f"similarity coordinates need t < 1, got t={t}")
    lam = np.sqrt(1.0 - t)
    return np.asarray(x, dtype=float) / lam, -np.log1p(-t)


def to_physical_point(y, tau: float):
    """(y, tau) -> (x, t), the inverse of :func:`to_similarity_point`."""
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    lam = np.exp(-0.5 * tau)
    return np.asarray(y, dtype=float) * lam, -np.expm1(-tau)


def similarity_transform(phi: Callable, inverse: bool = False) -> Callable:
    """Map a field phi(x, t) to u(y, tau) = e^{-tau/2} phi(e^{-tau/2} y, 1 - e^{-tau}).

    With ``inverse=True`` the argument is a rescaled field u(y, tau) and the
    physical field phi(x, t) = (1-t)^{-1/2} u(x / sqrt(1-t), -log(1-t)) is returned.
    """
    if inverse:
        def physical(x, t):
            y, tau = to_similarity_point(x, t)
            return u_call(y, tau) / np.sqrt(1.0 - t)

        u_call = phi
        return physical

    def rescaled(y, tau):
        x, t = to_physical_point(y, tau)
        return np.exp(-0.5 * tau) * phi(x, t)

    return rescaled


def jet_to_physical(B: OneFormJet, tau: float) -> OneFormJet:
    """Jet of the physical field at (x, t) from the rescaled jet at (y, tau)."""
    e = np.exp(0.5 * tau)
    third = None if B.third is None else e**4 * B.third
    return OneFormJet(e * B.value, e**2 * B.grad, e**3 * B.hess, third, B.label)


def rescaled_rhs_via_physical(B: OneFormJet, u: OneFormJet, y, tau: float) -> np.ndarray:
    """Chain rule: d_tau B = -B/2 - y.grad B/2 + e^{-3 tau/2} (de-Turck rhs at (x, t))."""
    y = np.asarray(y, dtype=float)
    psi = jet_to_physical(B, tau)
    phi = jet_to_physical(u, tau)
    phys = deturck_rhs(psi, phi)
    radial = np.einsum("k,kjab->jab", y, B.grad)
    return -0.5 * B.value - 0.5 * radial + np.exp(-1.5 * tau) * phys


# ------------------------------------------------------------ finite differences


def finite_diff_jet(f: Callable, y, h: float = 1e-3) -> OneFormJet:
    """Jet of a one-form field by fourth-order central differences.

    Both the gradient and the Hessian use the five-point stencil (the mixed
    second derivatives apply it along both axes); the Hessian is symmetrized.
    """
    if not h > 0:
        raise ValueError("step h must be positive")
    y = np.asarray(y, dtype=float)
    n = y.size
    eye = np.eye(n)
    c = np.array([1.0, -8.0, 8.0, -1.0]) / 12.0
    offs = np.array([-2, -1, 1, 2])

    cache = {}

    def ev(ki, kj, i, j):
        key = (ki, kj, i, j) if i <= j else (kj, ki, j, i)
        if key not in cache:
            cache[key] = np.asarray(f(y + h * (key[0] * eye[key[2]] + key[1] * eye[key[3]])), dtype=float)
        return cache[key]

    v0 = np.asarray(f(y), dtype=float)
    grad = np.zeros((n,) + v0.shape)
    hess = np.zeros((n, n) + v0.shape)
    c2 = np.array([-1.0, 16.0, 16.0, -1.0]) / 12.0
    for i in range(n):
        vals = [ev(o, 0, i, i) for o in offs]
        grad[i] = sum(cc * vv for cc, vv in zip(c, vals)) / h
        hess[i, i] = (sum(cc * vv for cc, vv in zip(c2, vals)) - 2.5 * v0) / (h * h)
        for j in range(i + 1, n):
            acc = 0.0
            for ca, oa in zip(c, offs):
                for cb, ob in zip(c, offs):
                    acc = acc + ca * cb * ev(oa, ob, i, j)
            hess[i, j] = hess[j, i] = acc / (h * h)
    hess = 0.5 * (hess + np.swapaxes(hess, 0, 1))
    return OneFormJet(v0, grad, hess, None, "fd")


def random_analytic_field(n: int, rng: np.random.Generator, length: float = 4.0) -> Callable:
    """Random smooth one-form u_j(y) = (M0_j + y^k M1_jk) exp(-|y|^2 / (2 length^2)).

    Returns a callable y -> OneFormJet with exact value, gradient and Hessian.
    """
    from .jets import scalar_times_jet
    from .liealg import random_so

    M0 = random_so(n, rng, n)              # [j]
    M1 = random_so(n, rng, (n, n))         # [j, k]
    c = 1.0 / (2.0 * length * length)

    def field(y):
        y = np.asarray(y, dtype=float)
        poly = OneFormJet(M0 + np.einsum("k,jkab->jab", y, M1),
                          np.einsum("jkab->kjab", M1), np.zeros((n,) * 5))
        f0 = np.exp(-c * (y @ y))
        f1 = -2.0 * c * y * f0
        f2 = (-2.0 * c * np.eye(n) + 4.0 * c * c * np.outer(y, y)) * f0
        return scalar_times_jet(f0, f1, f2, poly)

    return field
