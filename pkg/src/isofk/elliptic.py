"""Elliptic integrals, nome/modulus conversion, and the abstract-angle weight map.

The Z-invariant FK-Ising weights on an isoradial graph are parametrised by an
elliptic modulus k (equivalently a nome q).  Each rhombus half-angle theta_bar
is mapped to an abstract angle theta_hat solving

    F(theta_hat | k) = (K(k) / (pi/2)) * theta_bar,

where F is the incomplete and K the complete elliptic integral of the first
kind.  At k = 0 (critical weights) theta_hat == theta_bar; for a mass-m
scaling limit the nome is tied to the mesh by q = m*delta/2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

_AGM_TOL = 1e-15
_ITER_CAP = 64


class EllipticError(ValueError):
    """Domain violation or non-convergence in an elliptic routine."""


def complete_elliptic_K(k: float) -> float:
    """Quarter-period K(k) by the arithmetic-geometric mean, k in [0, 1)."""
    if not 0.0 <= k < 1.0:
        raise EllipticError(f"modulus k must lie in [0, 1), got {k}")
    a, b = 1.0, math.sqrt(1.0 - k * k)
    for _ in range(_ITER_CAP):
        if abs(a - b) <= _AGM_TOL * a:
            break
        a, b = 0.5 * (a + b), math.sqrt(a * b)
    else:
        raise EllipticError(f"AGM did not converge for k={k}")
    return math.pi / (2.0 * a)


def incomplete_elliptic_F(phi: float, k: float) -> float:
    """F(phi | k) for phi in [0, pi/2] by descending Landen transformation."""
    if not 0.0 <= k < 1.0:
        raise EllipticError(f"modulus k must lie in [0, 1), got {k}")
    if not 0.0 <= phi <= math.pi / 2:
        raise EllipticError(f"amplitude must lie in [0, pi/2], got {phi}")
    if k == 0.0:
        return phi
    a, b = 1.0, math.sqrt(1.0 - k * k)
    twon = 1.0
    for _ in range(_ITER_CAP):
        if abs(a - b) <= _AGM_TOL * a:
            break
        # phi_{n+1} ~ 2 phi_n; atan2 keeps the branch continuous
        psi = math.atan2(b * math.sin(phi), a * math.cos(phi))
        phi = phi + psi + math.pi * round((phi - psi) / math.pi)
        a, b = 0.5 * (a + b), math.sqrt(a * b)
        twon *= 2.0
    else:
        raise EllipticError(f"Landen descent did not converge for k={k}")
    return phi / (twon * a)


def nome_from_modulus(k: float) -> float:
    """q = exp[-pi K(k') / K(k)] with k' the complementary modulus."""
    if not 0.0 <= k < 1.0:
        raise EllipticError(f"modulus k must lie in [0, 1), got {k}")
    if k == 0.0:
        return 0.0
    kprime = math.sqrt((1.0 - k) * (1.0 + k))
    if kprime >= 1.0:  # k so small that 1 - k^2 rounds to 1; q ~ k^2/16
        return k * k / 16.0
    return math.exp(-math.pi * complete_elliptic_K(kprime) / complete_elliptic_K(k))


def modulus_from_nome(q: float) -> float:
    """Inverse of ``nome_from_modulus`` via theta series k = (theta2/theta3)^2."""
    if not 0.0 <= q < 1.0:
        raise EllipticError(f"nome q must lie in [0, 1), got {q}")
    if q == 0.0:
        return 0.0
    # theta2 = 2 q^{1/4} sum q^{n(n+1)},  theta3 = 1 + 2 sum q^{n^2}
    t2, t3 = 1.0, 1.0
    for n in range(1, 256):
        a2, a3 = q ** (n * (n + 1)), q ** (n * n)
        t2 += a2
        t3 += 2.0 * a3
        if a2 < 1e-18 and a3 < 1e-18:
            break
    k = (2.0 * q**0.25 * t2 / t3) ** 2
    if k >= 1.0:
        raise EllipticError(f"nome q={q} too close to 1 for the theta series")
    if abs(nome_from_modulus(k) - q) > 1e-10 * max(q, 1e-30):
        raise EllipticError(f"modulus inversion stalled at q={q}")
    return k


@dataclass(frozen=True)
class EllipticParams:
    """Weight parameters: modulus k, nome q, quarter-period K(k).

    ``mass_context`` records (m, delta) when the nome was derived from the
    scaling rule q = m*delta/2; it is metadata only.
    """

    k: float
    q: float
    bigK: float
    mass_context: tuple[float, float] | None = None

    @classmethod
    def from_modulus(cls, k: float) -> "EllipticParams":
        return cls(k=k, q=nome_from_modulus(k), bigK=complete_elliptic_K(k))

    @classmethod
    def from_nome(cls, q: float) -> "EllipticParams":
        k = modulus_from_nome(q)
        return cls(k=k, q=q, bigK=complete_elliptic_K(k))

    @classmethod
    def from_mass(cls, m: float, delta: float) -> "EllipticParams":
        """Massive scaling q = m*delta/2 (so q <= m*delta and q/delta -> m/2)."""
        if m < 0 or delta <= 0:
            raise EllipticError("need m >= 0 and delta > 0")
        q = 0.5 * m * delta
        k = modulus_from_nome(q)
        return cls(k=k, q=q, bigK=complete_elliptic_K(k),
                   mass_context=(m, delta))

    @classmethod
    def critical(cls) -> "EllipticParams":
        return cls(k=0.0, q=0.0, bigK=math.pi / 2)


def theta_hat(theta_bar: float, params: EllipticParams, eta: float = 1e-6) -> float:
    """Abstract angle solving F(theta_hat|k) = (K/(pi/2)) * theta_bar.

    Monotone bracketed root-find on [theta_bar, pi/2); exact identity
    theta_hat == theta_bar at k = 0.
    """
    if not eta <= theta_bar <= math.pi / 2 - eta:
        raise EllipticError(
            f"theta_bar={theta_bar} outside angle bound [{eta}, pi/2-{eta}]")
    if params.k == 0.0:
        return theta_bar
    target = params.bigK / (math.pi / 2) * theta_bar
    lo, hi = theta_bar, math.pi / 2 - 1e-12
    flo = incomplete_elliptic_F(lo, params.k) - target
    fhi = incomplete_elliptic_F(hi, params.k) - target
    if flo > 0 or fhi < 0:
        raise EllipticError(f"bracket failure for theta_bar={theta_bar}, k={params.k}")
    # bisection-secant hybrid; the objective is smooth and monotone
    for _ in range(200):
        if hi - lo <= 1e-12:
            break
        mid = lo - flo * (hi - lo) / (fhi - flo)
        if not lo + 1e-15 < mid < hi - 1e-15:
            mid = 0.5 * (lo + hi)
        fmid = incomplete_elliptic_F(mid, params.k) - target
        if fmid <= 0:
            lo, flo = mid, fmid
        else:
            hi, fhi = mid, fmid
    else:
        raise EllipticError("theta_hat root-find exceeded iteration cap")
    return 0.5 * (lo + hi)


def fk_edge_weights(theta_hat_val: float) -> tuple[float, float]:
    """Per-edge factors (open, closed) = (sin(th/2), sin(pi/4 - th/2))."""
    if not 0.0 < theta_hat_val < math.pi / 2:
        raise EllipticError(f"abstract angle must lie in (0, pi/2), got {theta_hat_val}")
    return math.sin(0.5 * theta_hat_val), math.sin(math.pi / 4 - 0.5 * theta_hat_val)
