import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from degcontrol.errors import DomainError
from degcontrol.kalman import make_system
from degcontrol.solver_1d import (ModalState1D, SampledControl, adjoint_initial, adjoint_solve,
                                  control_pairing, fd_forward_oracle, fd_mesh, inner, modal_forward,
                                  norm_h1_1d, norm_hm1_1d, norm_l2_1d, uniform_control, zero_state)
from degcontrol.spectrum import eigenfunctions, eigenvalues, input_gains, make_exponent

SCALAR = make_system([[0.0]], [[1.0]])
JORDAN = make_system([[0, 1], [0, 0]], [[0], [1]])


def state(exp, sys, coeffs):
    return ModalState1D(np.asarray(coeffs, dtype=complex), exp, sys)


@pytest.mark.parametrize("alpha", [0.3, 1.4])
def test_constant_control_closed_form(alpha):
    e = make_exponent(alpha)
    K, T, c = 6, 0.4, 0.7
    lam, g = eigenvalues(e, K), input_gains(e, K)
    h = uniform_control(T, np.full(257, c))
    w0 = state(e, SCALAR, np.arange(1, K + 1)[:, None] * 0.1)
    out = modal_forward(w0, h, T).coeffs[:, 0]
    ref = np.exp(-lam * T) * w0.coeffs[:, 0] + g * c * (1 - np.exp(-lam * T)) / lam
    assert np.allclose(out, ref, rtol=1e-11, atol=1e-13)


def test_free_evolution_with_coupling():
    e = make_exponent(0.5)
    lam = eigenvalues(e, 3)
    w0 = state(e, JORDAN, [[1, 2], [0, 1], [1, 0]])
    out = modal_forward(w0, None, 0.3).coeffs
    E = expm(JORDAN.A * 0.3)
    for k in range(3):
        assert np.allclose(out[k], np.exp(-lam[k] * 0.3) * E @ w0.coeffs[k])


def test_polynomial_control_with_coupling_vs_quadrature():
    from scipy.integrate import quad_vec
    e = make_exponent(0.5)
    K, T = 4, 0.6
    lam, g = eigenvalues(e, K), input_gains(e, K)
    h = uniform_control(T, np.sin(3 * np.linspace(0, T, 257)))
    out = modal_forward(zero_state(e, JORDAN, K), h, T).coeffs
    for k in range(K):
        f = lambda t: expm((JORDAN.A - lam[k] * np.eye(2)) * (T - t)) @ JORDAN.B[:, 0] * np.sin(3 * t)
        ref, _ = quad_vec(f, 0, T, epsabs=1e-13)
        assert np.allclose(out[k], g[k] * ref, atol=1e-9)


def test_semigroup_property():
    e = make_exponent(1.2)
    rng = np.random.default_rng(0)
    w0 = state(e, JORDAN, rng.standard_normal((5, 2)))
    t = np.linspace(0, 1.0, 201)
    h = SampledControl(t, np.cos(5 * t))
    direct = modal_forward(w0, h, 1.0)
    mid = modal_forward(w0, h.restrict(0, 0.5), 0.5)
    two = modal_forward(mid, h.restrict(0.5, 1.0), 0.5)
    assert np.allclose(direct.coeffs, two.coeffs, atol=1e-12)


@pytest.mark.parametrize("alpha", [0.4, 1.0, 1.6])
def test_transposition_identity(alpha):
    e = make_exponent(alpha)
    rng = np.random.default_rng(1)
    K, T = 6, 0.5
    w0 = state(e, JORDAN, rng.standard_normal((K, 2)))
    vT = state(e, JORDAN, rng.standard_normal((K, 2)) + 1j * rng.standard_normal((K, 2)))
    t = np.linspace(0, T, 129)
    h = SampledControl(t, np.exp(t) * np.sin(4 * t))
    wT = modal_forward(w0, h, T)
    lhs = inner(wT, vT) - inner(w0, adjoint_initial(vT, T))
    sign = adjoint_solve(vT, T, 9).sign
    rhs = sign * control_pairing(h, vT, T)
    assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-12)


def test_adjoint_solve_shape_and_domain():
    e = make_exponent(0.5)
    vT = state(e, JORDAN, np.ones((3, 2)))
    tr = adjoint_solve(vT, 1.0, 17)
    assert tr.values.shape == (17, 1) and tr.sign == 1.0
    with pytest.raises(DomainError):
        adjoint_solve(vT, 0.0)


def test_norms_diagonal_weights():
    e = make_exponent(0.0)
    w = state(e, SCALAR, [[1.0], [2.0]])
    lam = eigenvalues(e, 2)
    assert norm_l2_1d(w) == pytest.approx(np.sqrt(5))
    assert norm_h1_1d(w) == pytest.approx(np.sqrt(lam[0] + 4 * lam[1]))
    assert norm_hm1_1d(w) == pytest.approx(np.sqrt(1 / lam[0] + 4 / lam[1]))


def test_state_validation():
    e = make_exponent(0.5)
    with pytest.raises(DomainError):
        state(e, JORDAN, np.ones((3, 3)))
    with pytest.raises(DomainError):
        state(e, SCALAR, [[np.inf]])


def test_sampled_control_validation():
    with pytest.raises(DomainError):
        SampledControl([0.0], [1.0])
    with pytest.raises(DomainError):
        SampledControl([0.0, 0.5, 0.5], [1, 2, 3])
    with pytest.raises(DomainError):
        SampledControl([0.0, 1.0], [1, 2, 3])
    with pytest.raises(DomainError):
        SampledControl([0.0, 1.0], [1, np.nan])
    h = uniform_control(1.0, np.zeros(5))
    with pytest.raises(DomainError):
        modal_forward(zero_state(make_exponent(0.5), SCALAR, 2), h, 2.0)


def test_l2_norm_of_sampled_sine():
    t = np.linspace(0, np.pi, 401)
    assert SampledControl(t, np.sin(t)).l2_norm() == pytest.approx(np.sqrt(np.pi / 2), rel=1e-9)


def test_on_mesh_reconstructs_mode():
    e = make_exponent(0.5)
    x = np.linspace(0.1, 1, 7)
    w = state(e, SCALAR, [[0.0], [1.0]])
    assert np.allclose(w.on_mesh(x)[:, 0], eigenfunctions(e, 2, x)[1])


@pytest.mark.parametrize("alpha", [0.5, 1.5])
def test_fd_free_decay_of_first_mode(alpha):
    e = make_exponent(alpha)
    M = 800
    mesh = fd_mesh(e, M)
    x = mesh.x
    phi = np.zeros(M + 1)
    phi[x > 0] = eigenfunctions(e, 1, x[x > 0])[0]
    if not e.weak:
        phi[0] = phi[1]  # bounded at the degenerate end
    _, out = fd_forward_oracle(e, SCALAR, phi, None, 0.2, M, 400)
    ratio = mesh.l2_norm(out) / mesh.l2_norm(phi)
    assert ratio == pytest.approx(np.exp(-eigenvalues(e, 1)[0] * 0.2), rel=5e-3)


@pytest.mark.parametrize("alpha", [0.5, 1.5])
def test_fd_forced_matches_modal(alpha):
    e = make_exponent(alpha)
    M, T, K = 1000, 0.3, 200
    t = np.linspace(0, T, 301)
    h = SampledControl(t, np.sin(np.pi * t / T) ** 2)
    modal = modal_forward(zero_state(e, SCALAR, K), h, T)
    mesh = fd_mesh(e, M)
    x, out = fd_forward_oracle(e, SCALAR, np.zeros(M + 1), h, T, M, 2000)
    inside = x > 0
    ref = modal.on_mesh(x[inside])[:, 0]
    err = np.sqrt(np.sum(mesh.volumes[inside] * np.abs(out[inside, 0] - ref) ** 2))
    assert err / mesh.l2_norm(out) < 2e-2


def test_fd_mesh_guard():
    with pytest.raises(DomainError):
        fd_forward_oracle(make_exponent(0.5), SCALAR, np.zeros(101), None, 1.0, 100, 10)


@settings(max_examples=20, deadline=None)
@given(st.floats(min_value=0.0, max_value=1.9), st.floats(min_value=-2, max_value=2),
       st.floats(min_value=-2, max_value=2))
def test_linearity_in_data_and_control(alpha, a, b):
    e = make_exponent(alpha)
    t = np.linspace(0, 0.5, 33)
    h1 = SampledControl(t, np.cos(t))
    h2 = SampledControl(t, t ** 2)
    w1 = state(e, JORDAN, [[1, 0], [0, 1], [1, 1]])
    w2 = state(e, JORDAN, [[0, 2], [1, 0], [0, -1]])
    combo = modal_forward(w1.copy(a * w1.coeffs + b * w2.coeffs),
                          SampledControl(t, a * h1.values + b * h2.values), 0.5)
    sep = a * modal_forward(w1, h1, 0.5).coeffs + b * modal_forward(w2, h2, 0.5).coeffs
    assert np.allclose(combo.coeffs, sep, atol=1e-11)
