"""Equivariant sector: u_j(y) = sigma_j(y) v(|y|).

The radial half-line is discretized by Chebyshev-Lobatto collocation.  An
even number 2K of Lobatto nodes on [-1, 1] is mapped through the odd cubic
r = R (c x + (1 - c) x^3), and even symmetry v(-r) = v(r) folds the problem
onto the K nodes with r > 0.  Evenness builds the regularity v'(0) = 0 into
the discretization.  At r = R the diffusion term is dropped, which leaves a
pure outflow condition for the Gaussian-weighted drift -r/2.

The reduced operator is assembled from the pointwise tensor operator in
:mod:`ymlab.operators`, evaluated on basis jets at the nodes r_k e_1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from math import gamma, pi

import numpy as np
from scipy.interpolate import BarycentricInterpolator
from scipy.optimize import brentq
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import operators
from .jets import OneFormJet, radial_to_s_derivatives, sigma_radial_jet
from .liealg import sigma_all
from .soliton import SolitonParams, _params, constants


class DiscretizationError(RuntimeError):
    """The discrete operator failed an internal consistency check."""


def sphere_area(n: int) -> float:
    """Area of the unit sphere S^{n-1} in R^n."""
    return 2.0 * pi ** (n / 2.0) / gamma(n / 2.0)


def cheb_lobatto(N: int):
    """Ascending Chebyshev-Lobatto nodes with first and second derivative matrices."""
    j = np.arange(N)
    x = np.cos(np.pi * j / (N - 1))[::-1]
    w = (-1.0) ** j
    w[0] *= 0.5
    w[-1] *= 0.5
    X = x[:, None] - x[None, :]
    np.fill_diagonal(X, 1.0)
    D = (w[None, :] / w[:, None]) / X
    np.fill_diagonal(D, 0.0)
    np.fill_diagonal(D, -D.sum(axis=1))
    D2 = 2.0 * D * (np.diag(D)[:, None] - 1.0 / X)
    np.fill_diagonal(D2, 0.0)
    np.fill_diagonal(D2, -D2.sum(axis=1))
    return x, D, D2


def clenshaw_curtis_weights(N: int) -> np.ndarray:
    """Clenshaw-Curtis weights for the ascending Lobatto nodes of :func:`cheb_lobatto`."""
    m = N - 1
    theta = np.pi * np.arange(N) / m
    w = np.zeros(N)
    v = np.ones(N - 2)
    if m % 2 == 0:
        w[0] = w[-1] = 1.0 / (m * m - 1)
        for k in range(1, m // 2):
            v -= 2.0 * np.cos(2 * k * theta[1:-1]) / (4 * k * k - 1)
        v -= np.cos(m * theta[1:-1]) / (m * m - 1)
    else:
        w[0] = w[-1] = 1.0 / (m * m)
        for k in range(1, (m - 1) // 2 + 1):
            v -= 2.0 * np.cos(2 * k * theta[1:-1]) / (4 * k * k - 1)
    w[1:-1] = 2.0 * v / m
    return w[::-1]


@dataclass(frozen=True)
class RadialGrid:
    """Folded Chebyshev grid on (0, R_max] with K nodes."""

    K: int = 96
    R_max: float = 20.0
    stretch: float = 0.1

    def __post_init__(self):
        if self.K < 8:
            raise ValueError("K must be at least 8")
        if not 0.0 < self.stretch <= 1.0:
            raise ValueError("stretch must lie in (0, 1]")
        if not self.R_max > 0:
            raise ValueError("R_max must be positive")

    def _map(self, x):
        c, R = self.stretch, self.R_max
        return R * (c * x + (1 - c) * x**3), R * (c + 3 * (1 - c) * x**2), 6 * R * (1 - c) * x

    @cached_property
    def _full(self):
        x, D, D2 = cheb_lobatto(2 * self.K)
        r, rp, rpp = self._map(x)
        Dr = D / rp[:, None]
        Drr = D2 / rp[:, None] ** 2 - (rpp / rp**3)[:, None] * D
        return x, r, rp, Dr, Drr

    @cached_property
    def _fold(self):
        idx = np.arange(self.K, 2 * self.K)
        return idx, 2 * self.K - 1 - idx

    @property
    def x_full(self) -> np.ndarray:
        return self._full[0]

    @property
    def r(self) -> np.ndarray:
        idx, _ = self._fold
        return self._full[1][idx]

    @cached_property
    def Dr(self) -> np.ndarray:
        idx, mir = self._fold
        D = self._full[3]
        return D[idx][:, idx] + D[idx][:, mir]

    @cached_property
    def Drr(self) -> np.ndarray:
        idx, mir = self._fold
        D = self._full[4]
        return D[idx][:, idx] + D[idx][:, mir]

    @cached_property
    def quadrature(self) -> np.ndarray:
        """Weights q_k with sum_k q_k f(r_k) ~ int_0^R f(r) dr for even f."""
        idx, _ = self._fold
        q = clenshaw_curtis_weights(2 * self.K) * self._full[2]
        return q[idx]

    def even_extension(self, values) -> np.ndarray:
        return self._extend(values, 1.0)

    def odd_extension(self, values) -> np.ndarray:
        """Extension v(-r) = -v(r), the parity of first derivatives of even profiles."""
        return self._extend(values, -1.0)

    def _extend(self, values, sign: float) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        idx, mir = self._fold
        full = np.empty(values.shape[:-1] + (2 * self.K,))
        full[..., idx] = values
        full[..., mir] = sign * values
        return full

    def interpolator(self, full_values) -> BarycentricInterpolator:
        """Polynomial interpolant in x of values on all 2K nodes (last axis).

        Chebyshev-Lobatto nodes have closed-form barycentric weights; passing
        them also keeps the result independent of scipy's randomized weight
        computation, so repeated runs agree bit for bit.
        """
        N = 2 * self.K
        wi = (-1.0) ** np.arange(N)
        wi[0] *= 0.5
        wi[-1] *= 0.5
        return BarycentricInterpolator(self.x_full, np.moveaxis(np.asarray(full_values), -1, 0), wi=wi)

    def x_of_r(self, r: float) -> float:
        c, R = self.stretch, self.R_max
        if r < 0 or r > R * (1 + 1e-12):
            raise ValueError(f"radius {r} outside [0, {R}]")
        r = min(r, R)
        if r == 0.0:
            return 0.0
        return brentq(lambda x: R * (c * x + (1 - c) * x**3) - r, 0.0, 1.0, xtol=1e-15, rtol=1e-15)

    def refined(self, factor: int = 2) -> "RadialGrid":
        return RadialGrid(self.K * factor, self.R_max, self.stretch)


@dataclass(frozen=True)
class RadialProfile:
    grid: RadialGrid
    values: np.ndarray
    n: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.K,):
            raise ValueError(f"profile needs {self.grid.K} values, got {v.shape}")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, f, grid: RadialGrid, n: int) -> "RadialProfile":
        return cls(grid, np.asarray(f(grid.r), dtype=float), n)

    def __add__(self, other):
        return RadialProfile(self.grid, self.values + other.values, self.n)

    def __sub__(self, other):
        return RadialProfile(self.grid, self.values - other.values, self.n)

    def __mul__(self, c: float):
        return RadialProfile(self.grid, c * self.values, self.n)

    __rmul__ = __mul__

    def derivatives(self):
        return self.grid.Dr @ self.values, self.grid.Drr @ self.values

    def origin_slope(self) -> float:
        """Extrapolated v'(0); zero up to rounding by even symmetry."""
        interp = self.grid.interpolator(self.grid.odd_extension(self.grid.Dr @ self.values))
        return float(interp(0.0))


class Embedding:
    """Evaluator y -> jet of sigma_j(y) v(|y|) for a radial profile v."""

    def __init__(self, profile: RadialProfile):
        self.profile = profile
        g = profile.grid
        dv, d2v = profile.derivatives()
        stack = np.vstack([g.even_extension(profile.values), g.odd_extension(dv), g.even_extension(d2v)])
        self._interp = g.interpolator(stack)

    def radial(self, r: float):
        x = self.profile.grid.x_of_r(r)
        v, dv, d2v = self._interp(x)
        return float(v), float(dv), float(d2v)

    def __call__(self, y) -> OneFormJet:
        y = np.asarray(y, dtype=float)
        r = float(np.linalg.norm(y))
        if r > self.profile.grid.R_max * (1 + 1e-12):
            raise ValueError(f"|y|={r} exceeds R_max={self.profile.grid.R_max}")
        v, dv, d2v = self.radial(r)
        if r < 1e-12:
            return sigma_radial_jet(y, [v, 0.5 * d2v, 0.0])
        return sigma_radial_jet(y, radial_to_s_derivatives(r, v, dv, d2v))

    def value(self, y) -> np.ndarray:
        return self(y).value


def embed(v: RadialProfile) -> Embedding:
    return Embedding(v)


def radial_extract(field_value: np.ndarray, y) -> tuple:
    """Split a one-form value at y into sigma_j(y) c plus an off-ansatz remainder.

    Returns ``(c, residual_norm)``.
    """
    y = np.asarray(y, dtype=float)
    S = sigma_all(y)
    nrm = np.sum(S * S)
    if nrm == 0.0:
        return 0.0, float(np.linalg.norm(field_value))
    c = float(np.sum(S * field_value) / nrm)
    return c, float(np.linalg.norm(field_value - c * S))


def _basis_jet(y, r, v, dv, d2v):
    return sigma_radial_jet(y, radial_to_s_derivatives(r, v, dv, d2v))


def radial_coefficients(grid: RadialGrid, params, off_tol: float = 1e-7):
    """Coefficients c0, c1, c2 with (L u)_j = sigma_j (c2 v'' + c1 v' + c0 v).

    Obtained by applying the tensor operator to the three basis jets
    (v, v', v'') = (1,0,0), (0,1,0), (0,0,1) at each node r_k e_1.
    """
    p = _params(params)
    C = np.zeros((3, grid.K))
    worst = 0.0
    for k, r in enumerate(grid.r):
        y = np.zeros(p.n)
        y[0] = r
        for m, basis in enumerate(((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))):
            out = operators.linearized_L(_basis_jet(y, r, *basis), y, p)
            c, res = radial_extract(out, y)
            C[m, k] = c
            worst = max(worst, res / max(1.0, np.linalg.norm(out)))
    if worst > off_tol:
        raise DiscretizationError(f"off-ansatz residual {worst:.2e} exceeds {off_tol:.0e}")
    return C[0], C[1], C[2], worst


def hand_radial_coefficients(grid: RadialGrid, params):
    """Hand-derived coefficients of the reduced operator, used as a cross-check.

    L v = v'' + ((n+1)/r - r/2) v' - v + (n-2)(6w - 3 r^2 w^2) v with w = 1/(a r^2 + b).
    """
    p = _params(params)
    r = grid.r
    w = p.w_profile(r)
    c0 = -1.0 + (p.n - 2) * (6 * w - 3 * r * r * w * w)
    c1 = (p.n + 1) / r - r / 2
    return c0, c1, np.ones_like(r)


def _assemble(grid: RadialGrid, c0, c1, c2) -> np.ndarray:
    M = c2[:, None] * grid.Drr + c1[:, None] * grid.Dr + np.diag(c0)
    M[-1] = c1[-1] * grid.Dr[-1]
    M[-1, -1] += c0[-1]
    return M


@dataclass(frozen=True)
class ReducedOperator:
    matrix: np.ndarray
    grid: RadialGrid
    weight: np.ndarray
    params: SolitonParams
    off_ansatz_residual: float = 0.0
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def n(self) -> int:
        return self.params.n

    def apply(self, v: RadialProfile) -> RadialProfile:
        return RadialProfile(self.grid, self.matrix @ v.values, self.n)


def radial_weight(grid: RadialGrid, n: int) -> np.ndarray:
    """Quadrature weights of the reduced L^2_rho pairing on the grid."""
    r = grid.r
    return sphere_area(n) * 2.0 * (n - 1) * grid.quadrature * r ** (n + 1) * np.exp(-r * r / 4.0)


def reduce_L(grid: RadialGrid, params, source: str = "tensor") -> ReducedOperator:
    """Reduced linear operator on the grid.

    ``source="tensor"`` builds the coefficients from the pointwise operator
    (ground truth); ``source="hand"`` uses the hand-derived radial ODE.
    """
    p = _params(params)
    if source == "tensor":
        c0, c1, c2, res = radial_coefficients(grid, p)
    elif source == "hand":
        (c0, c1, c2), res = hand_radial_coefficients(grid, p), 0.0
    else:
        raise ValueError(f"unknown source {source!r}")
    M = _assemble(grid, c0, c1, c2)
    return ReducedOperator(M, grid, radial_weight(grid, p.n), p, res, {"source": source})


def weighted_inner(v1: RadialProfile, v2: RadialProfile) -> float:
    """<embed v1, embed v2> in L^2(R^n, e^{-|y|^2/4} dy)."""
    if v1.grid != v2.grid:
        raise ValueError("profiles live on different grids")
    w = radial_weight(v1.grid, v1.n)
    return float(np.sum(w * v1.values * v2.values))


def weighted_norm(v: RadialProfile) -> float:
    return float(np.sqrt(max(weighted_inner(v, v), 0.0)))


@dataclass(frozen=True)
class SpectralBasis:
    eigenvalues: np.ndarray
    vectors: np.ndarray          # (K, J) nodal values, weighted-orthonormal columns
    grid: RadialGrid
    n: int
    symmetry_residual: float
    gram_residual: float

    @property
    def split_index(self) -> int:
        return int(np.sum(self.eigenvalues <= 0.0))

    @property
    def lambda_next(self) -> float:
        """Smallest positive eigenvalue lambda_{I+1}."""
        return float(self.eigenvalues[self.split_index])

    @property
    def J(self) -> int:
        return self.vectors.shape[1]

    def mode(self, j: int) -> RadialProfile:
        """Eigenfunction xi_j (1-based) as a profile."""
        return RadialProfile(self.grid, self.vectors[:, j - 1], self.n)

    def coefficients(self, values) -> np.ndarray:
        """Weighted inner products with xi_j; accepts (K,) or (m, K) nodal arrays."""
        w = radial_weight(self.grid, self.n)
        return np.asarray(values) @ (w[:, None] * self.vectors)

    def synthesize(self, coeffs) -> np.ndarray:
        return np.asarray(coeffs) @ self.vectors.T


def spectrum(op: ReducedOperator, modes: int = 10, sym_tol: float = 1e-6) -> SpectralBasis:
    """Lowest ``modes`` eigenpairs of -L in the sector, orthonormal in L^2_rho.

    Dense eigen-solve followed by weighted Gram-Schmidt in increasing-lambda
    order (a Cholesky factor of the Gram matrix). The mixing is lower
    triangular, so each mode only absorbs lower modes and keeps its own
    far-field growth. The symmetry residual of the weighted Galerkin matrix is
    still reported and checked against ``sym_tol``.
    """
    K = op.grid.K
    if modes > K:
        raise ValueError("more modes requested than grid points")
    ev, vec = np.linalg.eig(-op.matrix)
    real = np.abs(ev.imag) <= 1e-8 * np.maximum(1.0, np.abs(ev.real))
    ev, vec = ev[real].real, vec[:, real].real
    order = np.argsort(ev)[:modes]
    if order.size < modes:
        raise DiscretizationError("not enough real eigenvalues")
    lam = ev[order]
    V = vec[:, order]
    V = V * np.sign(V[0])[None, :]
    w = op.weight
    G = V.T @ (w[:, None] * V)
    A = V.T @ (w[:, None] * (-op.matrix @ V))
    scale = np.sqrt(np.diag(G))
    An = A / np.outer(scale, scale)
    asym = float(np.abs(An - An.T).max() / max(1.0, np.abs(An).max()))
    if asym > sym_tol:
        raise DiscretizationError(f"symmetrization residual {asym:.2e} exceeds {sym_tol:.0e}")
    from scipy.linalg import cholesky, solve_triangular

    Lc = cholesky(G, lower=True)
    V = solve_triangular(Lc, V.T, lower=True).T
    G2 = V.T @ (w[:, None] * V)
    gram_res = float(np.abs(G2 - np.eye(modes)).max())
    return SpectralBasis(lam, V, op.grid, op.n, asym, gram_res)


_RELATIONS = {
    "=": lambda lam, mu: np.isclose(lam, mu, atol=1e-9),
    "!=": lambda lam, mu: ~np.isclose(lam, mu, atol=1e-9),
    "<": np.less,
    ">": np.greater,
    "<=": np.less_equal,
    ">=": np.greater_equal,
}
_RELATIONS["≠"] = _RELATIONS["!="]
_RELATIONS["≤"] = _RELATIONS["<="]
_RELATIONS["≥"] = _RELATIONS[">="]


def project(basis: SpectralBasis, relation: str, mu: float, v: RadialProfile) -> RadialProfile:
    """Spectral projector onto the modes with lambda_j (relation) mu."""
    if relation not in _RELATIONS:
        raise ValueError(f"unknown relation {relation!r}")
    sel = _RELATIONS[relation](basis.eigenvalues, mu)
    c = basis.coefficients(v.values) * sel
    return RadialProfile(v.grid, basis.synthesize(c), v.n)


def g_profile(grid: RadialGrid, params) -> RadialProfile:
    p = _params(params)
    return RadialProfile(grid, p.g_profile(grid.r), p.n)


def w_profile(grid: RadialGrid, params) -> RadialProfile:
    p = _params(params)
    return RadialProfile(grid, p.w_profile(grid.r), p.n)


def cosine(v1: RadialProfile, v2: RadialProfile) -> float:
    return weighted_inner(v1, v2) / (weighted_norm(v1) * weighted_norm(v2))


class SectorSpectrum(TransformerMixin, BaseEstimator):
    """Estimator view of the sector spectrum.

    ``fit`` assembles the reduced operator and its eigenbasis; ``transform``
    maps nodal profiles (rows) to weighted mode coefficients and
    ``inverse_transform`` synthesizes profiles from coefficients.
    """

    def __init__(self, n=5, K=96, R_max=20.0, stretch=0.1, modes=10, source="tensor"):
        self.n = n
        self.K = K
        self.R_max = R_max
        self.stretch = stretch
        self.modes = modes
        self.source = source

    def fit(self, X=None, y=None):
        self.params_ = constants(self.n)
        self.grid_ = RadialGrid(self.K, self.R_max, self.stretch)
        self.operator_ = reduce_L(self.grid_, self.params_, source=self.source)
        self.basis_ = spectrum(self.operator_, self.modes)
        self.eigenvalues_ = self.basis_.eigenvalues
        self.split_index_ = self.basis_.split_index
        return self

    def transform(self, X):
        check_is_fitted(self, "basis_")
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.grid_.K:
            raise ValueError(f"expected {self.grid_.K} nodal values per row")
        return self.basis_.coefficients(X)

    def inverse_transform(self, C):
        check_is_fitted(self, "basis_")
        return self.basis_.synthesize(np.atleast_2d(C))
