"""The explicit shrinking soliton W and the eigenfunctions built from it.

W_i(y) = sigma_i(y) / (a |y|^2 + b) with

    a = sqrt(n - 2) / (2 sqrt 2),   b = (6n - 12 - (n + 2) sqrt(2n - 4)) / 2.

The time-translation mode g_j = y^i d_i W_j + W_j equals 2b sigma_j / (a|y|^2+b)^2,
and the rows F_{W, alpha} of the curvature are eigenfunctions of -L with
eigenvalue -1/2.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from . import operators
from .jets import OneFormJet, scalar_s_derivatives, sigma_radial_jet
from .liealg import check_dimension, sigma_all, sigma_basis


@dataclass(frozen=True)
class SolitonParams:
    n: int
    a: float
    b: float

    def __post_init__(self):
        if not self.b > 0:
            raise ValueError(f"b must be positive, got {self.b}")

    def q(self, s):
        """Denominator a s + b as a function of s = |y|^2."""
        return self.a * s + self.b

    def w_profile(self, r):
        """Radial profile w(r) = 1 / (a r^2 + b) of the soliton."""
        r = np.asarray(r, dtype=float)
        return 1.0 / (self.a * r * r + self.b)

    def g_profile(self, r):
        """Radial profile of the time-translation eigenfunction (C = 1)."""
        r = np.asarray(r, dtype=float)
        return 2.0 * self.b / (self.a * r * r + self.b) ** 2

    def perturbed(self, da: float = 0.0, db: float = 0.0) -> "SolitonParams":
        """Copy with shifted constants, used as a negative control."""
        return SolitonParams(self.n, self.a + da, self.b + db)


def constants(n: int) -> SolitonParams:
    n = check_dimension(n)
    a = np.sqrt(n - 2.0) / (2.0 * np.sqrt(2.0))
    b = 0.5 * (6.0 * n - 12.0 - (n + 2.0) * np.sqrt(2.0 * n - 4.0))
    return SolitonParams(n, float(a), float(b))


def _params(p) -> SolitonParams:
    return p if isinstance(p, SolitonParams) else constants(p)


def W(y, params) -> np.ndarray:
    """Value of the soliton one-form at y, shape (n, n, n)."""
    p = _params(params)
    y = np.asarray(y, dtype=float)
    return sigma_all(y) / p.q(y @ y)


def _W_radial_derivatives(y, p: SolitonParams, order: int):
    """Derivatives in s = |y|^2 of 1/(a s + b), up to the given order."""
    q = p.q(y @ y)
    a = p.a
    gs = [1.0 / q, -a / q**2, 2.0 * a**2 / q**3]
    if order >= 3:
        gs.append(-6.0 * a**3 / q**4)
    return gs


def W_jet(y, params, order: int = 2) -> OneFormJet:
    """Exact jet of W at y (third derivatives included when order >= 3)."""
    p = _params(params)
    y = np.asarray(y, dtype=float)
    return sigma_radial_jet(y, _W_radial_derivatives(y, p, order), label="W")


@functools.lru_cache(maxsize=32)
def _curvature_at(key: bytes, p: SolitonParams, order: int):
    y = np.frombuffer(key, dtype=float)
    jet = W_jet(y, p, order=order)
    out = (jet, *operators.curvature_jet(jet))
    for arr in (jet.value, jet.grad, jet.hess, jet.third, *out[1:]):
        if arr is not None:
            arr.setflags(write=False)
    return out


def curvature_data(y, params, order: int = 2):
    """Jet of W with F_W, dF_W and (for ``order=3``) ddF_W at y.

    The result is cached per point, since the residual, the background of L and
    every row F_alpha all start from the same data. The arrays are read-only;
    with ``order=2`` the last entry is None.
    """
    y = np.ascontiguousarray(y, dtype=float)
    return _curvature_at(y.tobytes(), _params(params), 3 if order >= 3 else 2)


def spacetime_soliton(x, t: float, params) -> np.ndarray:
    """Self-similar profile (1 - t)^{-1/2} W(x / sqrt(1 - t))."""
    if not t < 1.0:
        raise ValueError(f"the soliton is defined only for t < 1, got t={t}")
    lam = np.sqrt(1.0 - t)
    return W(np.asarray(x, dtype=float) / lam, params) / lam


def soliton_residual(y, params) -> np.ndarray:
    """D_W^* F_W + (1/2) y^i F_W,ij, which vanishes for the true constants."""
    y = np.asarray(y, dtype=float)
    jet, F, dF, _ = curvature_data(y, params)
    return operators.codifferential(jet, F, dF) + 0.5 * np.einsum("i,ijab->jab", y, F)


def eigenfunction_g(y, params, form: str = "closed") -> OneFormJet:
    """Time-translation eigenfunction g_j = y^i d_i W_j + W_j (normalization C = 1).

    ``form="closed"`` returns the proportional form 2b sigma_j/(a|y|^2+b)^2;
    ``form="definition"`` builds value, gradient and Hessian
    from the jet of W directly.
    """
    p = _params(params)
    y = np.asarray(y, dtype=float)
    if form == "definition":
        jet = W_jet(y, p, order=3)
        # d_k (y^i d_i W_j) = d_k W_j + y^i d_i d_k W_j, and once more for the Hessian
        value = np.einsum("i,ijab->jab", y, jet.grad) + jet.value
        grad = 2.0 * jet.grad + np.einsum("i,ikjab->kjab", y, jet.hess)
        hess = 3.0 * jet.hess + np.einsum("i,ikljab->kljab", y, jet.third)
        return OneFormJet(value, grad, hess, None, "g")
    q = p.q(y @ y)
    a, b = p.a, p.b
    gs = [2 * b / q**2, -4 * a * b / q**3, 12 * a**2 * b / q**4]
    return sigma_radial_jet(y, gs, label="g")


def fit_g_constant(y, params) -> float:
    """Least-squares constant C' with definition-form = C' * sigma_j/(a|y|^2+b)^2."""
    p = _params(params)
    y = np.asarray(y, dtype=float)
    lhs = eigenfunction_g(y, p, form="definition").value
    basis = sigma_all(y) / p.q(y @ y) ** 2
    return float(np.sum(lhs * basis) / np.sum(basis * basis))


@functools.lru_cache(maxsize=None)
def _second_derivative_P(n: int, i: int) -> np.ndarray:
    """Constant d_k d_l P_ij for row i, shape (k, l, j, n, n)."""
    E = sigma_basis(n)
    eye = np.eye(n)
    out = (eye[:, i][:, None, None, None, None] * E[None]
           + eye[:, i][None, :, None, None, None] * E[:, None]
           - eye[:, None, :, None, None] * E[None, :, i][:, :, None]
           - eye[None, :, :, None, None] * E[:, None, i][:, :, None])
    out.setflags(write=False)
    return out


def eigenfunction_F(alpha: int, y, params) -> OneFormJet:
    """Row alpha (1-based) of the curvature of W, as a one-form jet.

    Uses [sigma_i, sigma_j] = P_ij - |y|^2 E_ij with P_ij = y_i sigma_j - y_j sigma_i
    and E_ij = sigma_j(e_i), so that with f(s) = 1/(a s + b)

        F_ij = (2f - s f^2) E_ij + (2f' + f^2) P_ij.

    Both coefficients are radial and P is quadratic in y, which gives the jet
    in closed form at O(n^5) cost.
    """
    p = _params(params)
    if not 1 <= alpha <= p.n:
        raise ValueError(f"alpha={alpha} outside 1..{p.n}")
    y = np.asarray(y, dtype=float)
    n, i, s = p.n, alpha - 1, float(y @ y)
    f0, f1, f2, f3 = _W_radial_derivatives(y, p, 3)
    A0, A1, A2 = scalar_s_derivatives(y, [
        2 * f0 - s * f0**2,
        2 * f1 - f0**2 - 2 * s * f0 * f1,
        2 * f2 - 4 * f0 * f1 - 2 * s * (f1**2 + f0 * f2)])[:3]
    B0, B1, B2 = scalar_s_derivatives(y, [
        2 * f1 + f0**2, 2 * f2 + 2 * f0 * f1, 2 * f3 + 2 * (f1**2 + f0 * f2)])[:3]
    S = sigma_all(y)                   # [j]
    E = sigma_basis(n)                 # [k, j]
    eye = np.eye(n)
    c = (Ellipsis, None, None)         # lift a scalar array over the matrix axes
    Ea = E[i]                          # E_{alpha j}
    P = y[i] * S - y[c] * S[i]
    # d_k P_{alpha j}; the second derivatives are constant
    dP = (eye[:, i][:, None, None, None] * S[None] + y[i] * E
          - eye[c] * S[i] - y[None, :, None, None] * E[:, i][:, None])
    ddP = _second_derivative_P(n, i)
    value = A0 * Ea + B0 * P
    grad = A1[:, None, None, None] * Ea + B1[:, None, None, None] * P + B0 * dP
    hess = (A2[..., None, None, None] * Ea + B2[..., None, None, None] * P
            + B1[:, None, None, None, None] * dP[None] + B1[None, :, None, None, None] * dP[:, None]
            + B0 * ddP)
    return OneFormJet(value, grad, hess, None, f"F_{alpha}")


def curvature_F23_at(R: float, params) -> float:
    """Closed form of |F_W,23(-R e_1)|_F = sqrt2 ((2a-1)R^2 + 2b)/(aR^2+b)^2."""
    p = _params(params)
    if not R > 0:
        raise ValueError("R must be positive")
    return float(np.sqrt(2.0) * ((2 * p.a - 1) * R * R + 2 * p.b) / (p.a * R * R + p.b) ** 2)
