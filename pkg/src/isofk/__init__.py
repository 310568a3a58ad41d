"""Numerical laboratory for the massive FK-Ising model on isoradial graphs.

Three independent routes to the same observables are implemented and
cross-validated: exhaustive enumeration (tiny domains), Monte Carlo sampling,
and exact sparse linear solves of the massive s-holomorphic boundary value
problem.
"""

from .elliptic import (
    EllipticParams,
    complete_elliptic_K,
    incomplete_elliptic_F,
    fk_edge_weights,
    modulus_from_nome,
    nome_from_modulus,
    theta_hat,
)

__all__ = [
    "EllipticParams",
    "complete_elliptic_K",
    "incomplete_elliptic_F",
    "fk_edge_weights",
    "modulus_from_nome",
    "nome_from_modulus",
    "theta_hat",
]
