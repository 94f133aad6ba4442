"""Forward and adjoint solvers for the 1-d coupled degenerate system.

    w_t = (x^alpha w_x)_x + A w   on (0, 1),   w(t, 1) = 0,
    w(t, 0) = B h(t)              (weak regime, alpha < 1),
    (x^alpha w_x)(t, 0) = B h(t)  (strong regime, alpha >= 1).

In the eigenbasis every mode obeys dc_k/dt = (A - lambda_k) c_k + g_k B h
with the signed gains of spectrum.input_gains.  A finite-volume solver on
the graded mesh of spectrum.fd_discretization serves as an independent check.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import CubicSpline
from scipy.linalg import expm
from scipy.sparse.linalg import splu

from .errors import DomainError, NumericalError
from .spectrum import (eigenfunctions, eigenvalues, fd_discretization,
                       spectrum_table)

_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(4)


@dataclass
class ModalState1D:
    """Coefficients c_k in C^n of a state against phi_1..phi_K."""

    coeffs: np.ndarray
    exp: object
    sys: object

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.ndim == 1:
            c = c.reshape(-1, 1)
        if c.shape[0] < 1 or c.shape[1] != self.sys.n:
            raise DomainError(f"coeffs must have shape (K, {self.sys.n}), got {c.shape}")
        if not np.all(np.isfinite(c)):
            raise DomainError("state has non-finite coefficients")
        self.coeffs = c

    @property
    def K(self):
        return self.coeffs.shape[0]

    def copy(self, coeffs=None):
        return ModalState1D(self.coeffs.copy() if coeffs is None else coeffs, self.exp, self.sys)

    def on_mesh(self, x):
        """Physical values at points x in (0, 1], shape (len(x), n)."""
        xa = np.asarray(x, dtype=float)
        out = np.zeros((len(xa), self.sys.n), dtype=complex)
        inside = xa > 0
        Phi = eigenfunctions(self.exp, self.K, xa[inside])
        out[inside] = Phi.T @ self.coeffs
        return out


def zero_state(exp, sys, K):
    return ModalState1D(np.zeros((K, sys.n), dtype=complex), exp, sys)


@dataclass
class SampledControl:
    """Control samples on a strictly increasing grid covering [0, T]."""

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        v = np.asarray(self.values)
        if v.ndim == 1:
            v = v.reshape(-1, 1)
        if g.ndim != 1 or len(g) < 2:
            raise DomainError("control grid needs at least two samples")
        if np.any(np.diff(g) <= 0):
            raise DomainError("control grid must be strictly increasing")
        if v.shape[0] != len(g):
            raise DomainError("one control value per grid point is required")
        if not np.all(np.isfinite(v)):
            raise DomainError("control has non-finite samples")
        self.grid = g
        self.values = v

    @property
    def m(self):
        return self.values.shape[1]

    def spline(self):
        return CubicSpline(self.grid, self.values, axis=0)

    def __call__(self, t):
        return self.spline()(t)

    def quadrature(self):
        """Gauss points, weights and interpolated values on every cell."""
        g = self.grid
        half = 0.5 * np.diff(g)
        mid = 0.5 * (g[1:] + g[:-1])
        t = (mid[:, None] + half[:, None] * _GAUSS_X[None, :]).ravel()
        w = (half[:, None] * _GAUSS_W[None, :]).ravel()
        return t, w, self.spline()(t)

    def l2_norm(self):
        _, w, v = self.quadrature()
        return float(np.sqrt(np.sum(w[:, None] * np.abs(v) ** 2)))

    def restrict(self, t0, t1):
        """Samples on [t0, t1] shifted to start at 0; t0, t1 must be grid points."""
        i0 = int(np.argmin(np.abs(self.grid - t0)))
        i1 = int(np.argmin(np.abs(self.grid - t1)))
        if abs(self.grid[i0] - t0) > 1e-12 or abs(self.grid[i1] - t1) > 1e-12:
            raise DomainError("restriction end points must be grid points")
        return SampledControl(self.grid[i0:i1 + 1] - self.grid[i0], self.values[i0:i1 + 1])


def uniform_control(T, values):
    values = np.asarray(values)
    return SampledControl(np.linspace(0.0, T, len(values)), values)


def _propagators(A, taus):
    """e^{A tau} for every tau, using a step recurrence on uniform sets."""
    n = A.shape[0]
    taus = np.asarray(taus, dtype=float)
    if not np.any(A):
        return np.broadcast_to(np.eye(n), (len(taus), n, n))
    d = np.diff(taus)
    if len(taus) > 2 and np.allclose(d, d[0], rtol=1e-10, atol=1e-14):
        # arithmetic sequence: multiply by a fixed step propagator
        order = np.argsort(taus)
        ts = taus[order]
        step = expm(A * (ts[1] - ts[0]))
        out = np.empty((len(taus), n, n), dtype=complex)
        cur = expm(A * ts[0])
        for i in range(len(ts)):
            out[order[i]] = cur
            cur = cur @ step
        return out
    return np.array([expm(A * tau) for tau in taus])


def modal_forward(w0, h, T):
    """Final modal state after time T under the sampled control h.

    c_k(T) = e^{(A - lambda_k)T} c_k(0) + g_k int_0^T e^{(A - lambda_k)(T-t)} B h(t) dt,
    with h interpolated by a cubic spline and integrated by 4-point Gauss
    quadrature on each sampling cell.  h = None means no control.
    """
    if not T > 0:
        raise DomainError("T must be > 0")
    sys, exp = w0.sys, w0.exp
    K = w0.K
    lam = eigenvalues(exp, K)
    EA = expm(sys.A * T)
    out = np.exp(-lam * T)[:, None] * (w0.coeffs @ EA.T)
    if h is None:
        return w0.copy(out)
    if len(h.grid) < 2:
        raise DomainError("empty control grid with T > 0")
    if abs(h.grid[0]) > 1e-12 or abs(h.grid[-1] - T) > 1e-9 * max(1.0, T):
        raise DomainError("control grid must cover [0, T]")
    g = spectrum_table(exp, K).input_gains
    t, w, hv = h.quadrature()
    tau = T - t
    Bh = hv @ sys.B.T
    if np.any(sys.A):
        # e^{A tau} on cell i at Gauss node q: E(T - t_{i+1}) F_q
        grid = h.grid
        Ecell = _propagators(sys.A, T - grid[1:])
        half = 0.5 * np.diff(grid)
        ncell = len(grid) - 1
        V = np.empty((ncell, 4, sys.n), dtype=complex)
        Bh4 = Bh.reshape(ncell, 4, sys.n)
        for q in range(4):
            off = half * (1.0 - _GAUSS_X[q])
            uniform = np.allclose(off, off[0], rtol=1e-12, atol=1e-15)
            if uniform:
                F = expm(sys.A * off[0])
                V[:, q] = np.einsum("ijk,ik->ij", Ecell, Bh4[:, q] @ F.T)
            else:
                Fs = _propagators(sys.A, off)
                tmp = np.einsum("ijk,ik->ij", Fs, Bh4[:, q])
                V[:, q] = np.einsum("ijk,ik->ij", Ecell, tmp)
        V = V.reshape(-1, sys.n)
    else:
        V = Bh
    # chunk over modes to bound memory
    forced = np.empty((K, sys.n), dtype=complex)
    for k0 in range(0, K, 64):
        k1 = min(K, k0 + 64)
        W = np.exp(-lam[k0:k1, None] * tau[None, :]) * w[None, :]
        forced[k0:k1] = W @ V
    out = out + g[:, None] * forced
    return w0.copy(out)


@dataclass
class AdjointTrace:
    """Boundary observation of the adjoint state on a time grid."""

    times: np.ndarray
    values: np.ndarray
    sign: float


def observation_at(vT, T, times):
    """sum_k o_k B^* e^{(A^* - lambda_k)(T - t)} v_{T,k} at the given times."""
    sys, exp = vT.sys, vT.exp
    K = vT.K
    tab = spectrum_table(exp, K)
    lam, o = tab.eigenvalues, tab.obs_traces
    times = np.asarray(times, dtype=float)
    tau = T - times
    As = sys.A.conj().T
    if np.any(As):
        E = _propagators(As, tau)
    else:
        E = None
    out = np.zeros((len(times), sys.m), dtype=complex)
    Bs = sys.B.conj().T
    for k0 in range(0, K, 64):
        k1 = min(K, k0 + 64)
        decay = np.exp(-lam[k0:k1, None] * tau[None, :]) * o[k0:k1, None]
        # sum over modes first: S(t) = sum_k decay_k(t) v_k
        S = decay.T @ vT.coeffs[k0:k1]
        if E is not None:
            S = np.einsum("tij,tj->ti", E, S)
        out += S @ Bs.T
    return out


def adjoint_solve(vT, T, samples=1025):
    """Observation trajectory B^*(x^alpha v_x)(t, 0) or B^* v(t, 0) on a grid.

    The transposition identity reads
    <w(T), v_T> - <w0, v(0)> = sign * int_0^T <h(t), obs(t)> dt
    with sign = +1 in the weak regime and -1 in the strong regime.
    """
    if not T > 0:
        raise DomainError("T must be > 0")
    times = np.linspace(0.0, T, int(samples))
    sign = 1.0 if vT.exp.weak else -1.0
    return AdjointTrace(times, observation_at(vT, T, times), sign)


def adjoint_initial(vT, T):
    """Modal coefficients of the adjoint state v(0)."""
    lam = eigenvalues(vT.exp, vT.K)
    E = expm(vT.sys.A.conj().T * T)
    return vT.copy(np.exp(-lam * T)[:, None] * (vT.coeffs @ E.T))


def inner(w, v):
    """<w, v> = sum_k v_k^* w_k over the common modes."""
    K = min(w.K, v.K)
    return complex(np.sum(np.conj(v.coeffs[:K]) * w.coeffs[:K]))


def control_pairing(h, vT, T):
    """int_0^T <h(t), obs(t)> dt with the same quadrature as modal_forward."""
    t, w, hv = h.quadrature()
    obs = observation_at(vT, T, t)
    return complex(np.sum(w[:, None] * np.conj(obs) * hv))


def norm_h1_1d(state):
    lam = eigenvalues(state.exp, state.K)
    return float(np.sqrt(np.sum(lam[:, None] * np.abs(state.coeffs) ** 2)))


def norm_hm1_1d(state):
    lam = eigenvalues(state.exp, state.K)
    return float(np.sqrt(np.sum(np.abs(state.coeffs) ** 2 / lam[:, None])))


def norm_l2_1d(state):
    return float(np.sqrt(np.sum(np.abs(state.coeffs) ** 2)))


@dataclass
class FDMesh:
    x: np.ndarray
    volumes: np.ndarray

    def l2_norm(self, w):
        w = np.asarray(w)
        if w.ndim == 1:
            w = w[:, None]
        return float(np.sqrt(np.sum(self.volumes[:, None] * np.abs(w) ** 2)))


def fd_mesh(exp, M):
    x, vol, *_ = fd_discretization(exp, M)
    return FDMesh(x, vol)


def fd_forward_oracle(exp, sys, w0, h, T, M, steps):
    """Finite-volume solution at time T on the graded mesh.

    w0   array (M+1, n) of nodal values (or (M+1,) for n = 1)
    h    SampledControl, callable t -> (m,) array, or None
    Time stepping is Crank-Nicolson started by four backward Euler
    quarter steps.  Returns (x, w(T)) with w(T) of shape (M+1, n).
    """
    M = int(M)
    if M < 500:
        raise DomainError("M must be >= 500")
    if not T > 0 or int(steps) < 1:
        raise DomainError("T > 0 and steps >= 1 required")
    steps = int(steps)
    n = sys.n
    x, vol, idx, diag, off, c0 = fd_discretization(exp, M)
    w0 = np.asarray(w0, dtype=complex).reshape(M + 1, n)
    N = len(idx)
    S = sp.diags([off, diag, off], [-1, 0, 1], format="csr")
    In = sp.identity(n, format="csr")
    Mass = sp.kron(sp.diags(vol[idx]), In, format="csc")
    A = sys.A.real if not np.any(sys.A.imag) else sys.A
    Op = (-sp.kron(S, In) + sp.kron(sp.diags(vol[idx]), sp.csr_matrix(A))).tocsc()
    dtype = complex

    def factor(mat):
        lu = splu(mat.tocsc())
        if np.iscomplexobj(mat.data):
            return lu.solve
        # real factors: solve real and imaginary parts separately
        return lambda b: lu.solve(b.real) + 1j * lu.solve(b.imag)

    if h is None:
        def bh(t):
            return np.zeros(n, dtype=complex)
    else:
        fn = h.spline() if isinstance(h, SampledControl) else h

        def bh(t):
            return sys.B @ np.atleast_1d(np.asarray(fn(t), dtype=complex)).ravel()

    def forcing(t):
        b = np.zeros(N * n, dtype=dtype)
        if exp.weak:
            # lifted Dirichlet value at node 0 feeds the first unknown
            b[:n] = c0 * bh(t)
        else:
            b[:n] = -bh(t)
        return b

    u = w0[idx].ravel().astype(dtype)
    dt = T / steps
    t = 0.0
    be = factor(Mass - (dt / 4) * Op)
    for _ in range(4):
        t += dt / 4
        u = be(Mass @ u + (dt / 4) * forcing(t))
    lhs = factor(Mass - (dt / 2) * Op)
    rhs_op = (Mass + (dt / 2) * Op).tocsr()
    f_prev = forcing(t)
    for _ in range(steps - 1):
        f_next = forcing(t + dt)
        u = lhs(rhs_op @ u + (dt / 2) * (f_prev + f_next))
        f_prev = f_next
        t += dt
        if not np.all(np.isfinite(u)):
            raise NumericalError("non-finite values in finite-volume step", t=t)
    out = np.zeros((M + 1, n), dtype=complex)
    out[idx] = u.reshape(N, n)
    if exp.weak:
        out[0] = bh(T)
    return x, out
