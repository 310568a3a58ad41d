import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.optimize import brentq

from isofk.elliptic import (
    EllipticError,
    EllipticParams,
    complete_elliptic_K,
    fk_edge_weights,
    incomplete_elliptic_F,
    modulus_from_nome,
    nome_from_modulus,
    theta_hat,
)


def quad_F(phi, k):
    """Independent quadrature oracle for the incomplete integral."""
    val, err = quad(lambda t: 1.0 / math.sqrt(1.0 - (k * math.sin(t)) ** 2),
                    0.0, phi, epsabs=1e-13, epsrel=1e-13)
    assert err < 1e-10
    return val


def test_K_at_zero_is_half_pi():
    assert complete_elliptic_K(0.0) == pytest.approx(math.pi / 2, rel=1e-15)


def test_K_monotone_and_finite_near_one():
    ks = np.linspace(0.0, 1 - 1e-15, 200)
    vals = [complete_elliptic_K(k) for k in ks]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    assert math.isfinite(vals[-1]) and vals[-1] > 5.0


def test_K_against_quadrature():
    assert complete_elliptic_K(0.5) == pytest.approx(quad_F(math.pi / 2, 0.5), abs=1e-10)


@pytest.mark.parametrize("k", [0.1, 0.5, 0.9, 0.999])
@pytest.mark.parametrize("phi", [0.2, 0.7, 1.2, math.pi / 2])
def test_incomplete_F_against_quadrature(phi, k):
    assert incomplete_elliptic_F(phi, k) == pytest.approx(quad_F(phi, k), abs=1e-11)


def test_incomplete_F_at_half_pi_equals_K():
    for k in (0.2, 0.6, 0.95):
        assert incomplete_elliptic_F(math.pi / 2, k) == pytest.approx(
            complete_elliptic_K(k), rel=1e-13)


def test_domain_errors():
    with pytest.raises(EllipticError):
        complete_elliptic_K(1.0)
    with pytest.raises(EllipticError):
        complete_elliptic_K(-0.1)
    with pytest.raises(EllipticError):
        modulus_from_nome(1.0)
    with pytest.raises(EllipticError):
        fk_edge_weights(math.pi / 2)


def test_nome_small_k_expansion():
    k = 1e-4
    assert nome_from_modulus(k) == pytest.approx(k * k / 16, rel=1e-4)


def test_nome_zero_iff_k_zero():
    assert nome_from_modulus(0.0) == 0.0
    assert modulus_from_nome(0.0) == 0.0
    assert nome_from_modulus(1e-8) > 0.0


def test_modulus_from_nome_against_root_finding():
    q = 0.01
    k_root = brentq(lambda k: nome_from_modulus(k) - q, 1e-12, 1 - 1e-12,
                    xtol=1e-14)
    k = modulus_from_nome(q)
    assert k == pytest.approx(k_root, abs=1e-10)
    assert nome_from_modulus(k) == pytest.approx(q, abs=1e-10)


def test_round_trip_k_grid():
    for j in range(91):
        k = 0.01 * j
        assert modulus_from_nome(nome_from_modulus(k)) == pytest.approx(k, abs=1e-10)


def test_nome_strictly_increasing_in_k():
    ks = np.linspace(0.0, 0.99, 100)
    qs = [nome_from_modulus(k) for k in ks]
    assert all(b > a for a, b in zip(qs, qs[1:]))


@given(st.floats(min_value=0.0, max_value=0.95))
@settings(max_examples=40, deadline=None)
def test_params_invariant_q_formula(k):
    p = EllipticParams.from_modulus(k)
    kprime = math.sqrt(1 - k * k)
    if k == 0.0:
        assert p.q == 0.0
    elif kprime < 1.0:
        expect = math.exp(-math.pi * complete_elliptic_K(kprime) / p.bigK)
        assert p.q == pytest.approx(expect, rel=1e-12)
    assert p.bigK >= math.pi / 2


def test_theta_hat_critical_identity():
    p = EllipticParams.critical()
    assert theta_hat(math.pi / 3, p) == math.pi / 3


def test_theta_hat_tangent_expansion():
    # tan(theta_hat) = (1 + 4q) tan(theta_bar) + O(q^2)
    errs = []
    for q in (1e-3, 1e-4):
        p = EllipticParams.from_nome(q)
        for tb in (0.5, math.pi / 4, 1.2):
            th = theta_hat(tb, p)
            errs.append(abs(math.tan(th) - (1 + 4 * q) * math.tan(tb)) / q**2)
    assert max(errs) < 50.0  # single constant C across all probes


def test_theta_hat_mass_scaling_example():
    m, delta = 1.0, 1e-3
    p = EllipticParams.from_mass(m, delta)
    tb = math.pi / 4
    th = theta_hat(tb, p)
    assert th - tb == pytest.approx(m * delta * math.sin(2 * tb), abs=1e-5)


def test_theta_hat_dyadic_delta_scaling():
    # |theta_hat - theta_bar - m*delta*sin(2 theta_bar)| <= C delta^2, one C
    m, tb = 1.0, 0.6
    cs = []
    for n in range(4, 9):
        delta = 2.0 ** -n
        p = EllipticParams.from_mass(m, delta)
        err = abs(theta_hat(tb, p) - tb - m * delta * math.sin(2 * tb))
        cs.append(err / delta**2)
    assert max(cs) < 10.0


def test_theta_hat_increasing_in_k():
    tb = 0.7
    last = tb
    for k in (0.05, 0.1, 0.2, 0.4):
        th = theta_hat(tb, EllipticParams.from_modulus(k))
        assert th > last
        last = th


def test_theta_hat_angle_bound_error():
    p = EllipticParams.from_modulus(0.3)
    with pytest.raises(EllipticError):
        theta_hat(1e-9, p)
    with pytest.raises(EllipticError):
        theta_hat(math.pi / 2, p)


def test_fk_edge_weights_examples():
    wo, wc = fk_edge_weights(math.pi / 4)
    assert wo == pytest.approx(math.sin(math.pi / 8), rel=1e-15)
    assert wc == pytest.approx(math.sin(math.pi / 8), rel=1e-15)
    wo, wc = fk_edge_weights(math.pi / 3)
    assert wo == pytest.approx(0.5, rel=1e-12)
    assert wc == pytest.approx(math.sin(math.pi / 12), rel=1e-12)
    _, wc = fk_edge_weights(math.pi / 2 - 1e-12)
    assert wc < 1e-11


@given(st.floats(min_value=1e-3, max_value=math.pi / 2 - 1e-3))
@settings(max_examples=40, deadline=None)
def test_fk_edge_weights_positive(th):
    wo, wc = fk_edge_weights(th)
    assert wo > 0 and wc > 0
