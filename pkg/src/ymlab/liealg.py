"""Arithmetic on so(n): brackets, Frobenius pairings and the generator fields.

Elements of so(n) are stored as dense ``(n, n)`` float arrays.  Collections
of them (one-forms, two-forms, jets) are arrays whose last two axes are the
matrix axes, so every routine here broadcasts over leading axes.
"""

from __future__ import annotations

import functools

import numpy as np
from scipy.linalg import expm

N_MIN = 5
N_MAX = 9


class UsageError(ValueError):
    """Raised when arguments have incompatible shapes or index sets."""


def check_dimension(n: int, lo: int = N_MIN, hi: int = N_MAX) -> int:
    n = int(n)
    if not lo <= n <= hi:
        raise ValueError(f"dimension n={n} outside the supported range [{lo}, {hi}]")
    return n


def so_matrix(entries) -> np.ndarray:
    """Antisymmetrize ``entries`` (any leading batch axes allowed)."""
    a = np.asarray(entries, dtype=float)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise UsageError(f"expected square matrices, got shape {a.shape}")
    return 0.5 * (a - np.swapaxes(a, -1, -2))


def elementary(n: int, mu: int, nu: int) -> np.ndarray:
    """The matrix unit E_{mu nu} with 1-based indices."""
    e = np.zeros((n, n))
    e[mu - 1, nu - 1] = 1.0
    return e


def random_so(n: int, rng: np.random.Generator, size=()) -> np.ndarray:
    """Antisymmetrized matrices with entries drawn uniformly from [-1, 1]."""
    shape = (int(size),) if np.isscalar(size) else tuple(int(s) for s in size)
    return so_matrix(rng.uniform(-1.0, 1.0, size=shape + (n, n)))


def commutator(A, B) -> np.ndarray:
    """Return AB - BA, broadcasting over leading axes."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape[-2:] != B.shape[-2:]:
        raise UsageError(f"matrix size mismatch: {A.shape[-2:]} vs {B.shape[-2:]}")
    return A @ B - B @ A


def frobenius_inner(T, V) -> float:
    """Sum over all components of tr(T_a^t V_a)."""
    T = np.asarray(T, dtype=float)
    V = np.asarray(V, dtype=float)
    if T.shape != V.shape:
        raise UsageError(f"index sets differ: {T.shape} vs {V.shape}")
    return float(np.sum(T * V))


def frobenius_norm(T) -> float:
    return float(np.sqrt(np.sum(np.square(T))))


def sigma(i: int, y) -> np.ndarray:
    """Generator field (sigma_i(y))^mu_nu = delta_{i nu} y^mu - delta_{i mu} y^nu.

    ``i`` is 1-based, matching the coordinate labels used throughout.
    """
    y = np.asarray(y, dtype=float)
    n = y.shape[-1]
    if not 1 <= i <= n:
        raise UsageError(f"index i={i} outside 1..{n}")
    out = np.zeros(y.shape[:-1] + (n, n))
    out[..., :, i - 1] += y
    out[..., i - 1, :] -= y
    return out


def sigma_all(y) -> np.ndarray:
    """Stack of sigma_j(y) for j = 1..n, shape ``(..., n, n, n)`` indexed [j, mu, nu]."""
    y = np.asarray(y, dtype=float)
    n = y.shape[-1]
    eye = np.eye(n)
    # [j, mu, nu] = delta_{j nu} y_mu - delta_{j mu} y_nu
    return (np.einsum("jn,...m->...jmn", eye, y)
            - np.einsum("jm,...n->...jmn", eye, y))


@functools.lru_cache(maxsize=None)
def sigma_basis(n: int) -> np.ndarray:
    """Constant array E[k, j] = sigma_j(e_k), shape ``(n, n, n, n)`` (cached, read-only)."""
    E = sigma_all(np.eye(n))
    E.setflags(write=False)
    return E


def so_exponential(A) -> np.ndarray:
    """Matrix exponential of an antisymmetric matrix, projected back onto SO(n).

    Scaling and squaring (scipy) gives an accuracy far below 1e-12; a final
    polar step removes the residual drift from orthogonality.
    """
    A = so_matrix(A)
    Q = expm(A)
    return reorthogonalize(Q)


def reorthogonalize(Q) -> np.ndarray:
    """Nearest orthogonal matrix in the Frobenius sense (polar factor)."""
    U, _, Vt = np.linalg.svd(np.asarray(Q, dtype=float))
    return U @ Vt
