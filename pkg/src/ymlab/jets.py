"""Second- and third-order jets of so(n)-valued one-forms.

A jet stores the value of a one-form at one point together with its spatial
derivatives.  Index layout (all arrays end in the two matrix axes):

* ``value[j]``            component A_j
* ``grad[k, j]``          d_k A_j
* ``hess[k, l, j]``       d_k d_l A_j
* ``third[k, l, m, j]``   d_k d_l d_m A_j   (optional)

Fields of the form sigma_j(y) g(|y|^2) get exact jets from the Leibniz rule,
because sigma_j is linear in y.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .liealg import sigma_all, sigma_basis


@dataclass(frozen=True)
class OneFormJet:
    value: np.ndarray
    grad: np.ndarray
    hess: np.ndarray
    third: Optional[np.ndarray] = None
    label: str = field(default="", compare=False)

    @property
    def n(self) -> int:
        return self.value.shape[0]

    @property
    def order(self) -> int:
        return 3 if self.third is not None else 2

    def laplacian(self) -> np.ndarray:
        return np.einsum("kkjab->jab", self.hess)

    def divergence(self) -> np.ndarray:
        """Sum_i d_i A_i as a single matrix."""
        return np.einsum("iiab->ab", self.grad)

    def __add__(self, other: "OneFormJet") -> "OneFormJet":
        third = None
        if self.third is not None and other.third is not None:
            third = self.third + other.third
        return OneFormJet(self.value + other.value, self.grad + other.grad,
                          self.hess + other.hess, third)

    def __sub__(self, other: "OneFormJet") -> "OneFormJet":
        return self + other.scaled(-1.0)

    def scaled(self, c: float) -> "OneFormJet":
        third = None if self.third is None else c * self.third
        return OneFormJet(c * self.value, c * self.grad, c * self.hess, third, self.label)

    def truncated(self) -> "OneFormJet":
        return OneFormJet(self.value, self.grad, self.hess, None, self.label)


def zero_jet(n: int, order: int = 2) -> OneFormJet:
    third = np.zeros((n,) * 4 + (n, n)) if order >= 3 else None
    return OneFormJet(np.zeros((n, n, n)), np.zeros((n, n, n, n)),
                      np.zeros((n, n, n, n, n)), third, "zero")


def scalar_s_derivatives(y, gs: Sequence[float]):
    """Cartesian derivatives of the scalar G(y) = g(|y|^2) from g, g', g'', g'''."""
    y = np.asarray(y, dtype=float)
    n = y.size
    eye = np.eye(n)
    g = list(gs) + [0.0] * (4 - len(gs))
    G1 = 2.0 * y * g[1]
    G2 = 2.0 * eye * g[1] + 4.0 * np.outer(y, y) * g[2]
    sym = (np.einsum("kl,m->klm", eye, y) + np.einsum("km,l->klm", eye, y)
           + np.einsum("lm,k->klm", eye, y))
    G3 = 4.0 * sym * g[2] + 8.0 * np.einsum("k,l,m->klm", y, y, y) * g[3]
    return g[0], G1, G2, G3


def sigma_radial_jet(y, gs: Sequence[float], label: str = "") -> OneFormJet:
    """Jet of u_j(y) = sigma_j(y) g(|y|^2) given g and its s-derivatives.

    Passing four entries (g, g', g'', g''') also fills the third derivatives.
    """
    y = np.asarray(y, dtype=float)
    n = y.size
    S = sigma_all(y)                 # [j]
    E = sigma_basis(n)               # [k, j]
    G0, G1, G2, G3 = scalar_s_derivatives(y, gs)
    value = S * G0
    grad = E * G0 + np.einsum("k,jab->kjab", G1, S)
    hess = (np.einsum("kjab,l->kljab", E, G1) + np.einsum("ljab,k->kljab", E, G1)
            + np.einsum("kl,jab->kljab", G2, S))
    third = None
    if len(gs) >= 4:
        # outer products by broadcasting; einsum is slow for these shapes
        x = (None,) * 3
        third = (E[:, None, None] * G2[(None, Ellipsis) + x]
                 + E[None, :, None] * G2[(slice(None), None, slice(None)) + x]
                 + E[None, None, :] * G2[(Ellipsis, None) + x]
                 + G3[(Ellipsis,) + x] * S)
    return OneFormJet(value, grad, hess, third, label)


def radial_to_s_derivatives(r: float, v: float, dv: float, d2v: float):
    """Convert (v, v', v'') in r to (g, g', g'') in s = r^2 for r > 0."""
    if r <= 0:
        raise ValueError("the r-to-s conversion needs r > 0")
    g1 = dv / (2.0 * r)
    g2 = (d2v - dv / r) / (4.0 * r * r)
    return v, g1, g2


def scalar_times_jet(f0: float, f1, f2, u: OneFormJet) -> OneFormJet:
    """Jet of f(y) u(y) for a scalar f with gradient f1 and Hessian f2."""
    value = f0 * u.value
    grad = np.einsum("k,jab->kjab", f1, u.value) + f0 * u.grad
    hess = (np.einsum("kl,jab->kljab", f2, u.value)
            + np.einsum("k,ljab->kljab", f1, u.grad)
            + np.einsum("l,kjab->kljab", f1, u.grad)
            + f0 * u.hess)
    return OneFormJet(value, grad, hess, None, u.label)


def jet_from_arrays(value, grad, hess, label: str = "") -> OneFormJet:
    value = np.asarray(value, dtype=float)
    grad = np.asarray(grad, dtype=float)
    hess = np.asarray(hess, dtype=float)
    n = value.shape[0]
    if value.shape != (n, n, n) or grad.shape != (n,) * 4 or hess.shape != (n,) * 5:
        raise ValueError("jet arrays have inconsistent shapes")
    return OneFormJet(value, grad, hess, None, label)
