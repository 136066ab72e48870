import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fpme import specfun as sf
from fpme.errors import DomainError, ParameterError
from fpme.kernel import (
    Kernel,
    Mesh,
    Params,
    assemble_weights,
    critical_exponent,
    derivative_weights,
    exponents,
    k_point,
    q_asymptotics,
    q_kernel,
    q_kernel_deriv,
    q_moment,
)

# Q(eta) from mpmath (50 digits): betainc, confirmed by subdivided quadrature of the
# defining integral in w = 1 - sigma
Q_REF = {
    (0.5, 2.0, 1): [(0.05, 0.65690021959846997), (0.3, 0.51584400769994274), (0.7, 0.28668900656119806),
                    (0.99, 0.046258450802514838), (0.999999, 0.00046065905790303717)],
    (0.3, 0.5, 3): [(0.05, 15.12739455418863), (0.3, 2.1752947982765757), (0.7, 0.55555257241215605),
                    (0.99, 0.037916636237984105), (0.999999, 5.9573690519437198e-5)],
    (0.8, 3.0, 2): [(0.05, 0.78939204463782641), (0.3, 0.39909946236433337), (0.7, 0.2128868833920226),
                    (0.99, 0.087026581162108807), (0.999999, 0.013709725081404354)],
}


def test_exponents_examples():
    e = exponents(Params(0.5, 2.0, 1))
    assert e.b == pytest.approx(1.0 / 6.0) and e.a == pytest.approx(1.0 / 6.0)
    e = exponents(Params(1.0, 3.0, 3))
    assert e.b == pytest.approx(1.0 / 8.0) and e.a == pytest.approx(3.0 / 8.0)


def test_critical_exponent_and_regimes():
    assert critical_exponent(1) == 0.0 and critical_exponent(2) == 0.0
    assert critical_exponent(3) == pytest.approx(1.0 / 3.0)
    assert Params(0.5, 2.0, 1).regime == "slow"
    assert Params(0.5, 0.5, 1).regime == "fast"
    assert Params(0.5, 1.0, 1).regime == "linear"
    with pytest.raises(ParameterError):
        Params(0.5, 0.2, 3)
    with pytest.raises(ParameterError):
        Params(0.0, 2.0, 1)
    with pytest.raises(ParameterError):
        Params(0.5, 2.0, 1, mass=-1.0)


@pytest.mark.parametrize("key", list(Q_REF))
def test_q_against_quadrature_oracle(key):
    p = Params(*key)
    for eta, ref in Q_REF[key]:
        assert float(q_kernel(p, eta)) == pytest.approx(ref, rel=1e-11)


def test_q_at_one_and_zero():
    p = Params(0.5, 2.0, 1)
    assert float(q_kernel(p, 1.0)) == 0.0
    # Q(0+) for d = 1, mpmath quadrature
    assert Kernel(p).q_at_zero() == pytest.approx(0.68510969880734158, rel=1e-12)
    assert float(q_kernel(p, 1e-12)) == pytest.approx(0.68510969880734158, rel=1e-9)


def test_q_near_one_expansion_is_continuous():
    p = Params(0.4, 2.5, 2)
    ker = Kernel(p)
    e = ker.NEAR_ONE
    inside = float(ker.q(1.0 - 0.999 * e, one_minus_eta=0.999 * e))
    outside = float(ker.q(1.0 - 1.001 * e, one_minus_eta=1.001 * e))
    assert inside == pytest.approx(outside, rel=5e-3)
    a = q_asymptotics(p)
    assert a.eta1_coeff == pytest.approx(exponents(p).b ** 0.4 / math.gamma(1.6), rel=1e-14)


@pytest.mark.parametrize("key", [(0.5, 2.0, 1), (0.3, 0.5, 3), (0.8, 3.0, 2)])
def test_q_derivative_matches_difference_quotient(key):
    p = Params(*key)
    eta = np.array([0.1, 0.4, 0.8])
    h = 1e-6
    fd = (q_kernel(p, eta + h) - q_kernel(p, eta - h)) / (2 * h)
    assert np.allclose(q_kernel_deriv(p, eta), fd, rtol=1e-6)


@settings(max_examples=40, deadline=None)
@given(
    st.floats(min_value=0.05, max_value=0.99),
    st.floats(min_value=1.1, max_value=6.0),
    st.sampled_from([1, 2, 3]),
)
def test_q_positive_and_decreasing(alpha, m, d):
    p = Params(alpha, m, d)
    eta = np.linspace(0.01, 0.99, 50)
    q = q_kernel(p, eta)
    assert np.all(q > 0)
    assert np.all(np.diff(q) < 0)


def test_classical_kernel_is_constant():
    p = Params(1.0, 2.0, 1)
    assert np.allclose(q_kernel(p, [0.1, 0.5, 0.9]), exponents(p).b)
    with pytest.raises(DomainError):
        q_kernel_deriv(p, 0.5)


@pytest.mark.parametrize("gamma,ref", [(3.0, 0.39554826903084209), (4.5, 0.1063502756729003)])
def test_moment_against_quadrature_oracle(gamma, ref):
    assert q_moment(Params(0.5, 2.0, 1), gamma) == pytest.approx(ref, rel=1e-12)


def test_moment_domain():
    with pytest.raises(DomainError):
        q_moment(Params(0.5, 0.5, 3), 2.5)


@settings(max_examples=30, deadline=None)
@given(st.floats(min_value=0.1, max_value=0.9), st.floats(min_value=2.3, max_value=12.0))
def test_moment_equals_integral_of_q(alpha, gamma):
    p = Params(alpha, 2.0, 1)
    spec = sf.QuadratureSpec(abs_tol=1e-13, rel_tol=1e-11)
    val, _ = sf.integrate(lambda s: q_kernel(p, s) * s ** (gamma - 3.0), 0.0, 1.0, spec, singular=(max(0.0, 3.0 - gamma), 0.0))
    assert q_moment(p, gamma) == pytest.approx(val, rel=1e-8)


def test_k_point():
    p = Params(0.5, 2.0, 1)
    assert k_point(p, 0.3, 0.6) == pytest.approx(0.6 * float(q_kernel(p, 0.5)))
    with pytest.raises(DomainError):
        k_point(p, 0.6, 0.3)


def test_mesh_validation():
    with pytest.raises(DomainError):
        Mesh(np.linspace(0, 1, 5))
    with pytest.raises(DomainError):
        Mesh(np.array([0, 1, 1, 2, 3, 4, 5, 6, 7], dtype=float))
    m = Mesh(np.linspace(0, 1, 9))
    assert m.I == 8
    assert m.mesh_id == Mesh(np.linspace(0, 1, 9)).mesh_id
    assert m.scaled(2.0).nodes[-1] == 2.0


@pytest.mark.parametrize("key", [(0.5, 2.0, 1), (0.7, 3.0, 1)])
def test_weights_closed_form_matches_quadrature_route(key):
    # dual route: closed-form cell integrals vs adaptive quadrature after integration by parts
    p = Params(*key)
    mesh = Mesh(np.linspace(0.0, 1.0, 17))
    wc = assemble_weights(p, mesh).w
    wq = assemble_weights(p, mesh, method="ibp").w
    assert np.allclose(wc, wq, rtol=1e-9, atol=1e-13)


def test_weights_nonnegative_and_upper_triangular():
    p = Params(0.4, 0.6, 2)
    mesh = Mesh(np.geomspace(0.01, 50.0, 41))
    w = assemble_weights(p, mesh).w
    assert w.shape == (41, 40)
    assert np.all(w >= 0)
    assert np.all(w[np.tril_indices(41, -1, 40)] == 0)


def test_weights_integrate_kernel_on_cell():
    p = Params(0.5, 2.0, 1)
    mesh = Mesh(np.linspace(0.0, 1.0, 9))
    w = assemble_weights(p, mesh).w
    # row i, cell j: int_{z_j}^{z_{j+1}} rho Q(z_i/rho) drho by direct quadrature
    i, j = 2, 5
    zi, zl, zr = mesh.nodes[i], mesh.nodes[j], mesh.nodes[j + 1]
    val, _ = sf.integrate(lambda r: r * q_kernel(p, zi / r), zl, zr, sf.QuadratureSpec(1e-15, 1e-13))
    assert w[i, j] == pytest.approx(val, rel=1e-11)


def test_derivative_weights_vectorized_rows_match_single_rows():
    p = Params(0.5, 2.0, 1)
    mesh = Mesh(np.linspace(0.0, 1.0, 33))
    z = mesh.nodes
    D, _ = derivative_weights(p, z, mesh)
    for k in (0, 5, 31):
        Dk, _ = derivative_weights(p, z[k:k + 1], mesh)
        assert np.array_equal(D[k], Dk[0])


def test_derivative_weights_of_constant_profile():
    # U = 1 on [0, 1] is exact under hat interpolation, so D @ 1 = int_z^1 (-Q')(z/rho) drho
    p = Params(0.5, 2.0, 1)
    mesh = Mesh(np.linspace(0.0, 1.0, 65))
    D, _ = derivative_weights(p, mesh.nodes[:-1], mesh)
    flux = D @ np.ones(65)
    z = mesh.nodes[10]
    spec = sf.QuadratureSpec(abs_tol=1e-14, rel_tol=1e-12)
    ref, _ = sf.integrate(lambda r: -q_kernel_deriv(p, np.minimum(z / r, 1 - 1e-16)), z, 1.0, spec, singular=(0.5, 0.0))
    assert flux[10] == pytest.approx(ref, rel=1e-8)
