"""Numerical laboratory for self-similar singularities of the Yang-Mills flow in dimensions 5 to 9.

Modules
-------
liealg       so(n) algebra and the sigma map
jets         second- and third-order jets of one-forms at a point
soliton      the explicit shrinking soliton and its eigenfunctions
operators    pointwise jets: curvature, L, A, N, rescaled flow
equivariant  radial reduction, spectrum and projectors in the equivariant sector
flow         rescaled and physical-time evolution, Duhamel and Picard solvers
analysis     inequality suites, weighted norms, growth checks, certificate
cli          command-line entry point
"""

from .soliton import SolitonParams, constants

__all__ = ["SolitonParams", "constants"]
__version__ = "0.1.0"
