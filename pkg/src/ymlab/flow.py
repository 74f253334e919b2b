"""Time evolution in the equivariant sector.

* :func:`evolve_rescaled` integrates dv/dtau = L v + N(v) on the radial grid.
* :func:`duhamel_solve` is the mode-wise variation-of-constants solution,
  forward in time for decaying modes and backward from infinity otherwise.
* :func:`picard_construct` iterates the fixed-point map whose fixed points
  are solutions converging to W.
* :func:`evolve_unrescaled` integrates the physical-time flow through a
  dynamically rescaled profile and tracks the Type-I ratio.
* :func:`gauge_integrate` solves S^{-1} dS/dt = -D^* phi at sample points.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from .equivariant import (RadialGrid, RadialProfile, ReducedOperator, SpectralBasis,
                          radial_weight)
from .liealg import reorthogonalize, sigma_all
from .soliton import SolitonParams, _params


class StiffnessError(RuntimeError):
    """Time integration failed; ``last_state`` holds the last accepted state."""

    def __init__(self, msg, last_state=None):
        super().__init__(msg)
        self.last_state = last_state


class HorizonError(RuntimeError):
    """The Duhamel horizon is too short for the requested tail tolerance."""


class DivergenceError(RuntimeError):
    """The Picard map failed to contract."""

    def __init__(self, msg, report=None):
        super().__init__(msg)
        self.report = report


class IntegratorError(RuntimeError):
    """Orthogonality drift in the gauge integrator."""


# ------------------------------------------------------------------ containers


@dataclass
class FlowTrace:
    tau: np.ndarray
    norm_rho: np.ndarray
    modes: np.ndarray
    sup_norm: np.ndarray
    profiles: Optional[np.ndarray] = None
    curvature_sup: Optional[np.ndarray] = None
    ratio: Optional[np.ndarray] = None
    time: Optional[np.ndarray] = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if np.any(np.diff(self.tau) <= 0):
            raise ValueError("sample times must be strictly increasing")


@dataclass
class ModeSeries:
    tau: np.ndarray          # uniform grid on [0, T]
    coeffs: np.ndarray       # (M + 1, J)
    eigenvalues: np.ndarray  # (J,), eigenvalues of -L

    def __post_init__(self):
        self.tau = np.asarray(self.tau, dtype=float)
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.ndim == 1:
            self.coeffs = self.coeffs[:, None]
        self.eigenvalues = np.atleast_1d(np.asarray(self.eigenvalues, dtype=float))
        if self.coeffs.shape != (self.tau.size, self.eigenvalues.size):
            raise ValueError("coefficient array does not match the time grid and mode count")
        steps = np.diff(self.tau)
        if self.tau[0] != 0.0 or not np.allclose(steps, steps[0], rtol=1e-10, atol=0):
            raise ValueError("ModeSeries needs a uniform grid starting at 0")

    @property
    def dt(self) -> float:
        return float(self.tau[1] - self.tau[0])

    @property
    def T(self) -> float:
        return float(self.tau[-1])


# -------------------------------------------------------------- nonlinearity


def nonlinear_reduced(v, r, params) -> np.ndarray:
    """Radial part of N for u_j = sigma_j v: (n-2) v^2 (3 (1 - w r^2) - r^2 v)."""
    p = _params(params)
    w = p.w_profile(r)
    return (p.n - 2) * v * v * (3.0 * (1.0 - w * r * r) - r * r * v)


def nonlinear_reduced_jac(v, r, params) -> np.ndarray:
    p = _params(params)
    w = p.w_profile(r)
    return (p.n - 2) * (6.0 * v * (1.0 - w * r * r) - 3.0 * r * r * v * v)


# ---------------------------------------------------------- rescaled evolution


def _trace_from_samples(taus, V, grid, n, basis: Optional[SpectralBasis], keep_profiles=True, **extra):
    w = radial_weight(grid, n)
    norms = np.sqrt(np.maximum(np.einsum("mk,k,mk->m", V, w, V), 0.0))
    modes = basis.coefficients(V) if basis is not None else np.zeros((len(taus), 0))
    sup = np.abs(V).max(axis=1) if V.size else np.zeros(len(taus))
    return FlowTrace(np.asarray(taus), norms, modes, sup, V if keep_profiles else None, **extra)


def evolve_rescaled(v0: RadialProfile, op: ReducedOperator, tau_end: float,
                    samples=None, basis: Optional[SpectralBasis] = None,
                    rtol: float = 1e-10, atol: float = 1e-16, method: str = "Radau") -> FlowTrace:
    """Method-of-lines integration of dv/dtau = L v + N(v) on the operator's grid."""
    if v0.grid != op.grid:
        raise ValueError("initial profile lives on a different grid")
    if samples is None:
        samples = np.linspace(0.0, tau_end, 101)
    samples = np.asarray(samples, dtype=float)
    r = op.grid.r
    M = op.matrix
    p = op.params

    def rhs(_, v):
        return M @ v + nonlinear_reduced(v, r, p)

    def jac(_, v):
        return M + np.diag(nonlinear_reduced_jac(v, r, p))

    sol = solve_ivp(rhs, (0.0, float(tau_end)), v0.values, method=method, t_eval=samples,
                    jac=jac, rtol=rtol, atol=atol)
    if not sol.success:
        last = sol.y[:, -1] if sol.y.size else v0.values
        raise StiffnessError(f"integration failed: {sol.message}", last)
    return _trace_from_samples(sol.t, sol.y.T, op.grid, v0.n, basis,
                               info={"nfev": int(sol.nfev), "method": method})


# -------------------------------------------------------------- Duhamel weights


def _stencil(m: int, M: int, p: int):
    """Nodes of a degree-p stencil around the interval [m, m+1] on 0..M."""
    start = m - (p - 1) // 2
    start = min(max(start, 0), M - p)
    return np.arange(start, start + p + 1)


def _lagrange_coeffs(offsets, dt):
    """C[k, i] with l_i(s) = sum_k C[k, i] s^k for nodes s_i = offsets_i * dt."""
    s = np.asarray(offsets, dtype=float) * dt
    V = np.vander(s, increasing=True)
    return np.linalg.inv(V)


_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)


def _scalar_moments(rate: float, dt: float, p: int, forward: bool):
    """Moments int_0^dt e^{-rate (dt - s)} s^k ds (forward) or int_0^dt e^{rate s} s^k ds.

    The backward branch is called with rate = lambda <= 0, so its kernel decays.
    """
    s = 0.5 * dt * (_GL_X + 1.0)
    wq = 0.5 * dt * _GL_W
    kern = np.exp(-rate * (dt - s)) if forward else np.exp(rate * s)
    return np.array([np.sum(wq * kern * s**k) for k in range(p + 1)])


def _phi_blocks(A: np.ndarray, dt: float, p: int):
    """e^{dt A} and the moments I_k = int_0^dt e^{A (dt - s)} s^k ds, k = 0..p."""
    K = A.shape[0]
    q = p + 2
    Z = np.zeros((q * K, q * K))
    Z[:K, :K] = dt * A
    for b in range(1, q):
        Z[(b - 1) * K:b * K, b * K:(b + 1) * K] = np.eye(K)
    E = expm(Z)
    blocks = [E[:K, b * K:(b + 1) * K] for b in range(q)]
    # blocks[b] = phi_b(dt A) for b >= 1 and I_k = k! dt^{k+1} phi_{k+1}(dt A)
    fact = 1.0
    moments = []
    for k in range(p + 1):
        if k > 0:
            fact *= k
        moments.append(fact * dt ** (k + 1) * blocks[k + 1])
    return blocks[0], moments


def _fit_tail_rate(tau, h):
    """Decay rate kappa of |h| near the end of the horizon (None if unreliable)."""
    n = max(5, len(tau) // 20)
    t, y = tau[-n:], h[-n:]
    if np.any(y == 0) or np.any(np.sign(y) != np.sign(y[-1])):
        return None
    return float(-np.polyfit(t, np.log(np.abs(y)), 1)[0])


def duhamel_solve(h: ModeSeries, basis=None, degree: int = 7, tail_tol: float = 1e-3) -> ModeSeries:
    """Mode-wise Duhamel solution of du_j/dtau = -lambda_j u_j + h_j.

    Modes with lambda_j > 0 start from u_j(0) = 0; modes with lambda_j <= 0 are
    integrated backward from infinity.  The source is interpolated locally
    with polynomials of the given degree and integrated against the exact
    exponential.  Beyond the horizon the source is extrapolated by its fitted
    exponential decay.
    """
    lam = h.eigenvalues if basis is None else np.asarray(basis.eigenvalues[: h.eigenvalues.size])
    tau, H = h.tau, h.coeffs
    M = tau.size - 1
    dt = h.dt
    p = min(degree, M)
    out = np.zeros_like(H)
    stencils = [_stencil(m, M, p) for m in range(M)]
    coeffs = {}
    for j, lj in enumerate(lam):
        forward = lj > 0
        mom = _scalar_moments(lj, dt, p, forward)
        if forward:
            decay = np.exp(-lj * dt)
            u = np.zeros(M + 1)
            for m in range(M):
                st = stencils[m]
                key = (st[0] - m, p)
                if key not in coeffs:
                    coeffs[key] = _lagrange_coeffs(st - m, dt)
                wts = mom @ coeffs[key]
                u[m + 1] = decay * u[m] + wts @ H[st, j]
        else:
            mu = -lj
            hmax = np.abs(H[:, j]).max()
            hT = H[-1, j]
            tail = 0.0
            if hmax > 0 and hT != 0.0:
                kappa = _fit_tail_rate(tau, H[:, j])
                if abs(hT) > tail_tol * hmax or kappa is None or kappa + mu <= 0:
                    if abs(hT) > tail_tol * hmax or kappa is None:
                        raise HorizonError(f"mode {j + 1}: source not decayed at the horizon "
                                           f"(|h(T)|/max|h| = {abs(hT) / hmax:.1e})")
                    raise HorizonError(f"mode {j + 1}: fitted tail rate {kappa:.3f} too slow")
                tail = -hT / (mu + kappa)
            u = np.zeros(M + 1)
            u[M] = tail
            grow = np.exp(-mu * dt)
            for m in range(M - 1, -1, -1):
                st = stencils[m]
                key = (st[0] - m, p)
                if key not in coeffs:
                    coeffs[key] = _lagrange_coeffs(st - m, dt)
                wts = mom @ coeffs[key]
                u[m] = grow * u[m + 1] - wts @ H[st, j]
        out[:, j] = u
    return ModeSeries(tau.copy(), out, lam.copy())


# -------------------------------------------------------------------- Picard


@dataclass
class PicardReport:
    iterations: int
    gaps: list
    contraction_factors: list
    converged: bool
    correction_norm: float
    data_norm: float
    projection_residual: float
    unstable_count: int


@dataclass
class PicardResult:
    tau: np.ndarray
    profiles: np.ndarray            # (M + 1, K)
    modes: ModeSeries               # coefficients on the spectral basis
    linear_part: np.ndarray         # iota_+(u0) sampled, (M + 1, K)
    report: PicardReport

    def initial_profile(self, grid: RadialGrid, n: int) -> RadialProfile:
        return RadialProfile(grid, self.profiles[0].copy(), n)


class _SplitPropagator:
    """Exact linear propagation on the grid, split into unstable and stable parts."""

    def __init__(self, op: ReducedOperator, dt: float, degree: int):
        M = op.matrix
        ev, VR = np.linalg.eig(M)
        unstable = np.where(ev.real >= 0.0)[0]
        unstable = unstable[np.argsort(-ev.real[unstable])]
        if np.any(np.abs(ev[unstable].imag) > 1e-8):
            raise RuntimeError("complex unstable eigenvalue in the reduced operator")
        evl, VL = np.linalg.eig(M.T)
        Vu = VR[:, unstable].real
        mu = ev[unstable].real
        idx = [int(np.argmin(np.abs(evl - m))) for m in mu]
        Wu = VL[:, idx].real
        self.mu = mu
        self.Vu = Vu
        self.coef = np.linalg.solve(Wu.T @ Vu, Wu.T)      # (I, K)
        self.Pu = Vu @ self.coef
        K = M.shape[0]
        self.Ps = np.eye(K) - self.Pu
        As = M @ self.Ps
        self.E, self.moments = _phi_blocks(As, dt, degree)
        self.dt = dt
        self.degree = degree

    def stable_weights(self, offsets):
        C = _lagrange_coeffs(offsets, self.dt)   # (p+1, p+1)
        return [sum(C[k, i] * self.moments[k] for k in range(C.shape[0])) for i in range(C.shape[1])]


def picard_construct(u0_tilde: RadialProfile, op: ReducedOperator, basis: SpectralBasis,
                     T: float = 20.0, dt: float = 0.05, tol: float = 1e-12,
                     max_iter: int = 60, degree: int = 5) -> PicardResult:
    """Fixed point of u = iota_+(u0) + Duhamel(N(u)) on a uniform tau-grid.

    iota_+(u0) propagates the stable part Pi_{>0} u0 by the linear semigroup.
    The Duhamel integral runs forward on the stable part (exact matrix
    exponential weights) and backward from infinity on the unstable modes.
    The contraction metric is the sup over tau of the weighted L^2 norm.
    """
    grid = op.grid
    r = grid.r
    params = op.params
    w = radial_weight(grid, u0_tilde.n)
    Msteps = int(round(T / dt))
    tau = np.linspace(0.0, Msteps * dt, Msteps + 1)
    prop = _SplitPropagator(op, dt, degree)
    p = degree
    stencils = [_stencil(m, Msteps, p) for m in range(Msteps)]
    wcache = {}

    def rho_sup(U):
        return float(np.sqrt(np.max(np.einsum("mk,k,mk->m", U, w, U))))

    # iota_+ u0: exact propagation of the stable part
    lin = np.zeros((Msteps + 1, grid.K))
    lin[0] = prop.Ps @ u0_tilde.values
    for m in range(Msteps):
        lin[m + 1] = prop.E @ lin[m]

    def apply_map(U):
        N = nonlinear_reduced(U, r, params)
        Hs = N @ prop.Ps.T
        Hu = N @ prop.coef.T                       # (M+1, I)
        out = lin.copy()
        acc = lin[0].copy()
        stable = np.zeros_like(U)
        for m in range(Msteps):
            st = stencils[m]
            key = st[0] - m
            if key not in wcache:
                wcache[key] = prop.stable_weights(st - m)
            wts = wcache[key]
            acc = prop.E @ acc + sum(Wi @ Hs[s] for Wi, s in zip(wts, st))
            stable[m + 1] = acc
        stable[0] = lin[0]
        out = stable
        if prop.mu.size:
            series = ModeSeries(tau, Hu, -prop.mu)
            cu = duhamel_solve(series, degree=degree).coeffs
            out = out + cu @ prop.Vu.T
        return out

    U = lin.copy()
    gaps, factors = [], []
    converged = False
    data_norm = float(np.sqrt(np.sum(w * u0_tilde.values**2)))
    for it in range(1, max_iter + 1):
        U_new = apply_map(U)
        gap = rho_sup(U_new - U)
        gaps.append(gap)
        if len(gaps) >= 2 and gaps[-2] > 0:
            factors.append(gap / gaps[-2])
            if factors[-1] >= 1.0 and gap > tol * max(data_norm, 1e-300):
                rep = PicardReport(it, gaps, factors, False, np.nan, data_norm, np.nan, prop.mu.size)
                raise DivergenceError(f"contraction factor {factors[-1]:.3f} >= 1", rep)
        U = U_new
        if gap <= tol * max(data_norm, 1e-300) or gap == 0.0:
            converged = True
            break
    correction = rho_sup(U - lin)
    delta0 = U[0] - u0_tilde.values
    proj = basis.coefficients(delta0) * (basis.eigenvalues > 0)
    report = PicardReport(len(gaps), gaps, factors, converged, correction, data_norm,
                          float(np.sqrt(np.sum(proj**2))), int(prop.mu.size))
    modes = ModeSeries(tau, basis.coefficients(U), basis.eigenvalues)
    return PicardResult(tau, U, modes, lin, report)


# ----------------------------------------------------- physical-time evolution


def radial_curvature_norm(r, h, dh, n: int) -> np.ndarray:
    """|F_A|_F at y = r e_1 for the equivariant connection A_j = sigma_j(y) h(|y|).

    F_ij = h (sigma_j(e_i) - sigma_i(e_j)) + (h'/r)(y_i sigma_j - y_j sigma_i)
    + h^2 [sigma_i, sigma_j]; the three tensors scale like 1, r, r^2.
    """
    e1 = np.zeros(n)
    e1[0] = 1.0
    E = sigma_all(np.eye(n))                  # [k, j] = sigma_j(e_k)
    S = sigma_all(e1)                         # [j]
    T1 = E - np.swapaxes(E, 0, 1)
    T2 = np.einsum("i,jab->ijab", e1, S) - np.einsum("j,iab->ijab", e1, S)
    T3 = S[:, None] @ S[None, :] - S[None, :] @ S[:, None]
    T = np.stack([T1, T2, T3]).reshape(3, -1)
    G = T @ T.T
    r = np.asarray(r, dtype=float)
    c = np.stack([np.asarray(h) * np.ones_like(r), r * np.asarray(dh), r * r * np.asarray(h) ** 2])
    return np.sqrt(np.maximum(np.einsum("a...,ab,b...->...", c, G, c), 0.0))


def evolve_unrescaled(h0: RadialProfile, t_end: float = 1.0, params=None,
                      stop_gap: float = 1e-5, curvature_cap: float = 1e10,
                      rtol: float = 1e-10, atol: float = 1e-13, samples: int = 200,
                      max_s: float = 60.0) -> FlowTrace:
    """Physical-time equivariant flow dh/dt = h'' + (n+1)/r h' + (n-2)(3h^2 - r^2 h^3).

    The profile is written as h(r, t) = G(r/L, s) / L^2 with ds = dt / L^2 and
    d(log L)/ds = -beta, where beta keeps G fixed at the innermost node.  In
    these variables a self-similar blowup is a steady state, so the solver
    reaches 1 - t = 1e-5 with a fixed grid.  Returned samples are uniform in s.
    """
    p = _params(params if params is not None else h0.n)
    grid = h0.grid
    xi = grid.r
    Dr, Drr = grid.Dr, grid.Drr
    n = p.n
    c1 = (n + 1) / xi

    def P(G):
        d1 = Dr @ G
        out = Drr @ G + c1 * d1 + (n - 2) * (3 * G * G - xi * xi * G**3)
        out[-1] = c1[-1] * d1[-1] + (n - 2) * (3 * G[-1] ** 2 - xi[-1] ** 2 * G[-1] ** 3)
        return out, d1

    G0 = h0.values[0]
    if G0 == 0.0 or np.allclose(h0.values, 0.0):
        # the zero connection is stationary
        ts = np.linspace(0.0, t_end, samples)
        Z = np.zeros((samples, grid.K))
        zero = np.zeros(samples)
        return FlowTrace(ts, zero, np.zeros((samples, 0)), zero, Z, zero, zero, ts,
                         info={"blowup": False})

    def rhs(_, state):
        G = state[:-2]
        PG, d1 = P(G)
        beta = PG[0] / (2 * G[0] + xi[0] * d1[0])
        dG = PG - beta * (2 * G + xi * d1)
        lnL = state[-2]
        return np.concatenate([dG, [-beta, np.exp(2 * lnL)]])

    def gap_event(_, state):
        return (t_end - state[-1]) - stop_gap

    gap_event.terminal = True

    def curv_event(_, state):
        G = state[:-2]
        L2 = np.exp(2 * state[-2])
        sup = radial_curvature_norm(xi, G, Dr @ G, n).max() / L2
        return np.log(curvature_cap) - np.log(sup)

    curv_event.terminal = True

    y0 = np.concatenate([h0.values, [0.0, 0.0]])
    s_grid = np.linspace(0.0, max_s, 20 * samples + 1)
    sol = solve_ivp(rhs, (0.0, max_s), y0, method="Radau", rtol=rtol, atol=atol,
                    events=[gap_event, curv_event], dense_output=True)
    if sol.status < 0:
        raise StiffnessError(f"physical-time integration failed: {sol.message}", sol.y[:, -1])
    s_end = sol.t[-1]
    s_samp = np.linspace(0.0, s_end, samples)
    Y = sol.sol(s_samp).T
    Gs = Y[:, :-2]
    L2 = np.exp(2 * Y[:, -2])
    t = Y[:, -1]
    sup = np.array([radial_curvature_norm(xi, G, Dr @ G, n).max() for G in Gs]) / L2
    ratio = (t_end - t) * sup
    info = {"s_end": float(s_end), "t_final": float(t[-1]), "gap_final": float(t_end - t[-1]),
            "sup_final": float(sup[-1]), "stopped_by": "gap" if sol.t_events[0].size else
            ("curvature" if sol.t_events[1].size else "max_s"),
            "blowup": bool(sup[-1] > 1e3 * sup[0])}
    norms = np.sqrt(np.maximum(np.einsum("mk,k,mk->m", Gs, radial_weight(grid, n), Gs), 0.0))
    tr = FlowTrace(s_samp, norms, np.zeros((samples, 0)), np.abs(Gs).max(axis=1), Gs, sup, ratio, t,
                   info=info)
    tr.info["L2"] = L2
    tr.info["dense"] = sol.sol
    return tr


def unrescaled_to_rescaled(trace: FlowTrace, index: int, grid: RadialGrid, params,
                           y_max: Optional[float] = None):
    """Rescaled perturbation v(y, tau) from one sample of an unrescaled run.

    Uses (W + v)(y) = (1 - t) h(sqrt(1 - t) y, t) with h = G(r / L) / L^2.
    Returns ``(tau, y, v)`` on the nodes y <= y_max.
    """
    p = _params(params)
    t = trace.time[index]
    L2 = trace.info["L2"][index]
    G = trace.profiles[index]
    scale = np.sqrt((1.0 - t) / L2)
    y = grid.r
    if y_max is None:
        y_max = grid.R_max / max(scale, 1.0)
    sel = y <= y_max
    xi = y[sel] * scale
    interp = grid.interpolator(grid.even_extension(G))
    xs = np.array([grid.x_of_r(min(v, grid.R_max)) for v in xi])
    f = (1.0 - t) / L2 * interp(xs)
    return -np.log1p(-t), y[sel], f - p.w_profile(y[sel])


# -------------------------------------------------------------------- gauge ODE


def gauge_integrate(generator: Callable, times, x_points, drift_tol: float = 1e-8):
    """Integrate S^{-1} dS/dt = -X(x, t) with X = D_psi^* phi at sample points.

    ``generator(x, t)`` returns the so(n) matrix X.  Each step uses the
    exponential midpoint rule S <- S exp(-dt X(t + dt/2)), followed by a polar
    re-orthogonalization.  Returns an array (len(times), P, n, n).
    """
    times = np.asarray(times, dtype=float)
    x_points = np.atleast_2d(np.asarray(x_points, dtype=float))
    X0 = np.asarray(generator(x_points[0], times[0]))
    n = X0.shape[-1]
    S = np.broadcast_to(np.eye(n), (x_points.shape[0], n, n)).copy()
    out = np.zeros((times.size, x_points.shape[0], n, n))
    out[0] = S
    worst = 0.0
    for m in range(times.size - 1):
        dt = times[m + 1] - times[m]
        tm = times[m] + 0.5 * dt
        for k, x in enumerate(x_points):
            X = np.asarray(generator(x, tm), dtype=float)
            X = 0.5 * (X - X.T)
            S[k] = S[k] @ expm(-dt * X)
            worst = max(worst, float(np.abs(S[k].T @ S[k] - np.eye(n)).max()))
            S[k] = reorthogonalize(S[k])
        out[m + 1] = S
    if worst > drift_tol:
        raise IntegratorError(f"orthogonality drift {worst:.1e} before re-orthogonalization")
    return out


# -------------------------------------------------------------------- decay fit


@dataclass
class DecayFit:
    rate: float
    residual: float
    ci_low: float
    ci_high: float
    reliable: bool
    efoldings: float


def decay_fit(tau, values, window=None) -> DecayFit:
    """Least-squares slope of log|values| against tau; rate = -slope.

    The 95% confidence interval uses the standard error of the slope.  The
    fit is flagged unreliable when the series is not monotone on the window or
    covers fewer than three e-foldings.
    """
    from scipy import stats

    tau = np.asarray(tau, dtype=float)
    y = np.abs(np.asarray(values, dtype=float))
    sel = np.ones_like(tau, dtype=bool)
    if window is not None:
        sel = (tau >= window[0]) & (tau <= window[1])
    t, yv = tau[sel], y[sel]
    if t.size < 3 or np.any(yv <= 0):
        raise ValueError("need at least three positive samples in the window")
    ly = np.log(yv)
    res = stats.linregress(t, ly)
    pred = res.intercept + res.slope * t
    resid = float(np.sqrt(np.mean((ly - pred) ** 2)))
    q = stats.t.ppf(0.975, max(t.size - 2, 1))
    half = q * res.stderr
    d = np.diff(ly)
    monotone = bool(np.all(d < 0) or np.all(d > 0))
    ef = float(abs(ly[-1] - ly[0]))
    rate = -float(res.slope)
    return DecayFit(rate, resid, rate - half, rate + half, monotone and ef >= 3.0, ef)
