"""Inequality checks, weighted norms, growth fits and the non-equivariance certificate."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad

from . import operators
from .equivariant import RadialProfile, sphere_area
from .jets import OneFormJet
from .liealg import commutator
from .soliton import W, _params, curvature_F23_at


# ------------------------------------------------------------ matrix inequality


def check_matrix_inequality(A, B) -> np.ndarray:
    """Margin n(|A|^2 |B|^2 - <A,B>^2) - |[A,B]|^2, broadcasting over leading axes."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    n = A.shape[-1]
    aa = np.sum(A * A, axis=(-2, -1))
    bb = np.sum(B * B, axis=(-2, -1))
    ab = np.sum(A * B, axis=(-2, -1))
    C = commutator(A, B)
    cc = np.sum(C * C, axis=(-2, -1))
    return n * (aa * bb - ab * ab) - cc


def matrix_inequality_fuzz(n: int, samples: int, rng: np.random.Generator, batch: int = 20000):
    """Minimum margin over random antisymmetric pairs, with the worst pair."""
    from .liealg import random_so

    worst = np.inf
    worst_pair = None
    done = 0
    while done < samples:
        m = min(batch, samples - done)
        A = random_so(n, rng, m)
        B = random_so(n, rng, m)
        marg = check_matrix_inequality(A, B)
        k = int(np.argmin(marg))
        if marg[k] < worst:
            worst = float(marg[k])
            worst_pair = (A[k], B[k])
        done += m
    return worst, worst_pair


# ------------------------------------------------------------------------ Kato


@dataclass
class KatoSample:
    lhs: float
    rhs: float
    norm: float
    commutator_term: float

    @property
    def gap(self) -> float:
        return self.lhs - self.rhs


def check_kato(u: Callable[[np.ndarray], OneFormJet], y, h: float = 1e-3) -> Optional[KatoSample]:
    """Compare Delta|u|_F with <u, Delta u>/|u| + (1/n) sum |[d_i u_j, u_j]|^2 / |u|^3.

    The left side uses fourth-order central differences of y -> |u(y)|_F; the
    right side uses the analytic jet.  Returns None near the zero set.
    """
    y = np.asarray(y, dtype=float)
    n = y.size
    jet = u(y)
    nu = float(np.sqrt(np.sum(jet.value**2)))
    if nu <= h:
        return None

    def norm_at(z):
        return float(np.sqrt(np.sum(u(z).value ** 2)))

    lap = 0.0
    for k in range(n):
        e = np.zeros(n)
        e[k] = h
        vals = [norm_at(y - 2 * e), norm_at(y - e), norm_at(y + e), norm_at(y + 2 * e)]
        lap += (-vals[0] + 16 * vals[1] - 30 * nu + 16 * vals[2] - vals[3]) / (12 * h * h)
    inner = float(np.sum(jet.value * jet.laplacian()))
    C = commutator(jet.grad, jet.value[None])
    comm = float(np.sum(C * C)) / n
    rhs = inner / nu + comm / nu**3
    return KatoSample(lap, rhs, nu, comm / nu**3)


def kato_tolerance(h: float, scale: float = 1.0) -> float:
    """Truncation plus rounding allowance for the finite-difference Laplacian."""
    return scale * (10.0 * h**4 + 1e-15 / h**2) * 1e3


# ----------------------------------------------------------------------- Ecker


@dataclass
class EckerResult:
    lhs: float
    rhs: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs * (1 + 1e-12) + 1e-300


def check_ecker(f, df=None, n: int = 5) -> EckerResult:
    """Check |y f|_rho <= 4n |f|_{rho,1} for a radial scalar field on R^n.

    |f|_{rho,1}^2 = |f|_rho^2 + |grad f|_rho^2 with rho = e^{-|y|^2/4}.
    ``f`` is either a RadialProfile (grid quadrature) or a callable of r with
    derivative ``df`` (adaptive quadrature on (0, inf)).
    """
    area = sphere_area(n)
    if isinstance(f, RadialProfile):
        g = f.grid
        r = g.r
        w = area * g.quadrature * r ** (n - 1) * np.exp(-r * r / 4)
        v = f.values
        dv = g.Dr @ v
        lhs2 = np.sum(w * r * r * v * v)
        f2 = np.sum(w * v * v)
        g2 = np.sum(w * dv * dv)
    else:
        if df is None:
            raise ValueError("callable input needs its derivative df")

        def integ(fun):
            return area * quad(lambda r: fun(r) * r ** (n - 1) * np.exp(-r * r / 4), 0, np.inf,
                               epsabs=0, epsrel=1e-12, limit=200)[0]

        lhs2 = integ(lambda r: (r * f(r)) ** 2)
        f2 = integ(lambda r: f(r) ** 2)
        g2 = integ(lambda r: df(r) ** 2)
    return EckerResult(float(np.sqrt(lhs2)), float(4 * n * np.sqrt(f2 + g2)))


# ---------------------------------------------------------- weights and norms

_ZA, _ZB = 0.5, 2.0
# quintic with p(1/2) = 1, p'(1/2) = p''(1/2) = 0, p(2) = 2, p'(2) = 1, p''(2) = 0
_ZETA_COEF = np.linalg.solve(
    np.array([[1, _ZA, _ZA**2, _ZA**3, _ZA**4, _ZA**5],
              [0, 1, 2 * _ZA, 3 * _ZA**2, 4 * _ZA**3, 5 * _ZA**4],
              [0, 0, 2, 6 * _ZA, 12 * _ZA**2, 20 * _ZA**3],
              [1, _ZB, _ZB**2, _ZB**3, _ZB**4, _ZB**5],
              [0, 1, 2 * _ZB, 3 * _ZB**2, 4 * _ZB**3, 5 * _ZB**4],
              [0, 0, 2, 6 * _ZB, 12 * _ZB**2, 20 * _ZB**3]], dtype=float),
    np.array([1.0, 0.0, 0.0, 2.0, 1.0, 0.0]))


def zeta(r):
    """Non-decreasing weight profile: 1 on [0, 1/2], r on [2, inf), quintic between."""
    r = np.asarray(r, dtype=float)
    mid = np.polynomial.polynomial.polyval(r, _ZETA_COEF)
    return np.where(r <= _ZA, 1.0, np.where(r >= _ZB, r, mid))


def rtilde(y):
    """r~(y) = zeta(|y|); accepts a point or an array of points (last axis)."""
    y = np.asarray(y, dtype=float)
    return zeta(np.linalg.norm(y, axis=-1))


@dataclass
class NormReport:
    sup0: float                # |u|_0^{[-1+gamma], delta}
    sup_grad: float            # |Du|_0^{[-1+gamma], delta}
    holder2: float             # |u|_{2,alpha}^{[gamma+alpha], delta}
    holder_seminorm: float     # largest sampled parabolic Hoelder quotient of the Hessian
    pairs_per_cylinder: int
    low_confidence: bool
    meta: dict = field(default_factory=dict)

    @property
    def star(self) -> float:
        return self.holder2 + self.sup0 + self.sup_grad


def _unit_ball(rng, m, n):
    g = rng.normal(size=(m, n))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g * rng.uniform(0, 1, size=(m, 1)) ** (1.0 / n)


def star_norm(field: Callable, centers, taus, gamma: float, alpha: float, delta: float,
              seed: int = 0, pairs: int = 64, min_pairs: int = 16) -> NormReport:
    """Sampled estimate of the star norm of a spacetime field.

    ``field(Y, tau)`` takes points Y of shape (P, n) and returns a tuple
    (value, grad, hess) with leading axes (P,), (P, n), (P, n, n); trailing
    axes are arbitrary tensor axes (Frobenius norm is taken over them).

    The two sup terms are evaluated pointwise at the samples, with the weight
    taken at the sample itself.  The Hoelder part takes, for every center
    (y, tau), sup norms of u, Du, D^2u over random points of the unit
    parabolic cylinder Q(y, tau) and the Hoelder quotient of D^2u over
    ``pairs`` point pairs stratified by separation.  Sampled suprema are lower
    bounds of the true ones.
    """
    if not (0 < alpha < gamma < 0.01):
        raise ValueError("need 0 < alpha < gamma < 1/100")
    if not delta > 0:
        raise ValueError("delta must be positive")
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    rng = np.random.default_rng(seed)
    n = centers.shape[1]

    def fro(a, lead):
        a = np.asarray(a, dtype=float)
        return np.sqrt(np.sum(a.reshape(a.shape[:lead] + (-1,)) ** 2, axis=-1))

    sup0 = sup1 = holder2 = semi = 0.0
    d0 = -1.0 + gamma
    d2 = gamma + alpha
    for tau in taus:
        val, grad, hess = field(centers, tau)
        wt = np.exp(delta * tau) * rtilde(centers) ** (-d0)
        sup0 = max(sup0, float(np.max(wt * fro(val, 1))))
        sup1 = max(sup1, float(np.max(wt * fro(grad, 1))))
    for yc in centers:
        for tc in taus:
            scales = 2.0 ** -np.arange(pairs // 8 + 1)
            sep = scales[rng.integers(0, scales.size, size=pairs)]
            p1 = yc + _unit_ball(rng, pairs, n) * 0.5
            dirn = rng.normal(size=(pairs, n))
            dirn /= np.linalg.norm(dirn, axis=1, keepdims=True)
            p2 = p1 + 0.5 * sep[:, None] * dirn
            t1 = tc + rng.uniform(0, 1, size=pairs)
            t2 = np.clip(t1 + rng.uniform(-1, 1, size=pairs) * sep**2, tc, tc + 1)
            sup_parts = np.zeros(3)
            quotients = []
            for k in range(pairs):
                va, ga, ha = field(p1[k:k + 1], t1[k])
                vb, gb, hb = field(p2[k:k + 1], t2[k])
                sup_parts = np.maximum(sup_parts, [max(fro(va, 1)[0], fro(vb, 1)[0]),
                                                   max(fro(ga, 1)[0], fro(gb, 1)[0]),
                                                   max(fro(ha, 1)[0], fro(hb, 1)[0])])
                dp = np.linalg.norm(p1[k] - p2[k]) + np.sqrt(abs(t1[k] - t2[k]))
                if dp > 0:
                    quotients.append(fro(np.asarray(ha) - np.asarray(hb), 1)[0] / dp**alpha)
            q = max(quotients) if quotients else 0.0
            semi = max(semi, q)
            local = float(sup_parts.sum() + q)
            holder2 = max(holder2, np.exp(delta * tc) * float(rtilde(yc)) ** (-d2) * local)
    low = pairs < min_pairs
    return NormReport(sup0, sup1, holder2, semi, pairs, low,
                      {"gamma": gamma, "alpha": alpha, "delta": delta, "seed": seed})


# --------------------------------------------------------------- growth checks


@dataclass
class GrowthResult:
    slope: float
    bound: float
    window: tuple
    flagged: bool

    @property
    def ok(self) -> bool:
        return self.slope <= self.bound + 0.1


def loglog_slope(r, values) -> float:
    r = np.asarray(r, dtype=float)
    v = np.abs(np.asarray(values, dtype=float))
    return float(np.polyfit(np.log(r), np.log(v), 1)[0])


def growth_check(xi: RadialProfile, lam: float, window=None, noise_floor: float = 1e-280) -> GrowthResult:
    """Far-field log-log slope of |embed(xi)(r e_1)|_F on [R_max/4, R_max].

    For u_j = sigma_j v the norm along a ray is sqrt(2(n-1)) r |v(r)|.
    """
    g = xi.grid
    lo, hi = window if window is not None else (g.R_max / 4.0, g.R_max)
    sel = (g.r >= lo) & (g.r <= hi)
    vals = np.sqrt(2.0 * (xi.n - 1)) * g.r[sel] * np.abs(xi.values[sel])
    flagged = bool(np.any(vals <= noise_floor))
    vals = np.maximum(vals, noise_floor)
    return GrowthResult(loglog_slope(g.r[sel], vals), 2.0 * lam - 1.0, (lo, hi), flagged)


def growth_check_field(norm_along_ray: Callable[[float], float], lam: float, R: float,
                       points: int = 64) -> GrowthResult:
    """Same fit for a pointwise field, sampled geometrically on [R/4, R]."""
    r = np.geomspace(R / 4.0, R, points)
    vals = np.array([norm_along_ray(x) for x in r])
    return GrowthResult(loglog_slope(r, vals), 2.0 * lam - 1.0, (R / 4.0, R), bool(np.any(vals == 0)))


# ----------------------------------------------------------- certificate


def chi(t):
    """Smooth step: 1 on [0, 1], 0 on [2, inf), exponential bumps in between."""
    t = np.asarray(t, dtype=float)

    def psi(s):
        return np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)

    a = psi(2.0 - t)
    b = psi(t - 1.0)
    return np.where(t <= 1.0, 1.0, np.where(t >= 2.0, 0.0, a / np.where(a + b > 0, a + b, 1.0)))


def cutoff_argument(x, R: float, reading: str = "point"):
    """Argument of chi: 4|x - R e_1|/R ("point") or 4||x| - R|/R ("shell")."""
    x = np.asarray(x, dtype=float)
    if reading == "point":
        e1 = np.zeros(x.shape[-1])
        e1[0] = R
        return 4.0 * np.linalg.norm(x - e1) / R
    if reading == "shell":
        return 4.0 * abs(np.linalg.norm(x) - R) / R
    raise ValueError(f"unknown reading {reading!r}")


def certificate_connection(R: float, params, reading: str = "point") -> Callable:
    """x -> value of W + u~_0 with u~_0 = -W chi(cutoff)."""
    p = _params(params)

    def A(x):
        return W(x, p) * (1.0 - chi(cutoff_argument(x, R, reading)))

    return A


@dataclass
class Certificate:
    R: float
    n: int
    reading: str
    minus_side: float      # |F_23(-R e_1)|_F
    plus_side: float       # max_ij |F_ij(R e_1)|_F
    exact_minus: float     # closed form for |F_W,23(-R e_1)|_F

    @property
    def margin(self) -> float:
        return self.minus_side - self.plus_side

    @property
    def passes(self) -> bool:
        return self.minus_side > self.plus_side

    @property
    def scaled_margin(self) -> float:
        return self.margin * self.R**2


def certify_nonequivariant(R: float, n: int = 5, reading: str = "point", h: float = 1e-3) -> Certificate:
    """Compare curvature norms of W + u~_0 at the antipodal points +-R e_1.

    An equivariant connection has equal curvature norms at antipodal points, so
    a strict gap certifies that the flow from this datum is not equivariant.
    """
    p = _params(n)
    A = certificate_connection(R, p, reading)
    e1 = np.zeros(p.n)
    e1[0] = R
    plus = operators.curvature(operators.finite_diff_jet(A, e1, h))
    minus = operators.curvature(operators.finite_diff_jet(A, -e1, h))
    plus_side = float(np.sqrt(np.sum(plus**2, axis=(-2, -1))).max())
    minus_side = float(np.sqrt(np.sum(minus[1, 2] ** 2)))
    return Certificate(float(R), p.n, reading, minus_side, plus_side, curvature_F23_at(R, p))
