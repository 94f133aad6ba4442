"""Spectral data of A_alpha u = -(x^alpha u')' on (0, 1).

Boundary conditions: u(1) = 0 and, at the degenerate end, u(0) = 0 in the
weak regime (alpha < 1) or (x^alpha u')(0) = 0 in the strong regime
(alpha >= 1).  With nu = |1 - alpha|/(2 - alpha) and kappa = (2 - alpha)/2
the eigenpairs are

    lambda_k = kappa^2 j_{nu,k}^2,
    phi_k(x) = sqrt(2 - alpha)/|J_nu'(j_k)| x^{(1-alpha)/2} J_nu(j_k x^kappa).
"""

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.integrate import quad_vec
from scipy.linalg import eigh_tridiagonal

from .errors import DomainError, NumericalError
from .special_functions import bessel_j, bessel_j_prime, bessel_zeros, gamma


class Regime(str, Enum):
    WEAK = "weak"
    STRONG = "strong"


@dataclass(frozen=True)
class DegeneracyExponent:
    alpha: float
    regime: Regime
    nu: float
    kappa: float

    @property
    def weak(self):
        return self.regime is Regime.WEAK


@dataclass(frozen=True)
class SpectralMode:
    k: int
    zero: float
    eigenvalue: float
    norm_factor: float
    obs_trace: float


def make_exponent(alpha):
    """Build the DegeneracyExponent for 0 <= alpha < 2."""
    alpha = float(alpha)
    if not (0.0 <= alpha < 2.0):
        raise DomainError(f"alpha must lie in [0, 2), got {alpha}")
    nu = abs(1.0 - alpha) / (2.0 - alpha)
    kappa = (2.0 - alpha) / 2.0
    regime = Regime.WEAK if alpha < 1.0 else Regime.STRONG
    return DegeneracyExponent(alpha, regime, nu, kappa)


@dataclass
class SpectrumTable:
    """Arrays for modes 1..K of one exponent."""

    exp: DegeneracyExponent
    zeros: np.ndarray
    eigenvalues: np.ndarray
    norm_factors: np.ndarray
    obs_traces: np.ndarray
    input_gains: np.ndarray = field(repr=False)

    @property
    def K(self):
        return len(self.zeros)

    def mode(self, k):
        i = k - 1
        return SpectralMode(k, float(self.zeros[i]), float(self.eigenvalues[i]),
                            float(self.norm_factors[i]), float(self.obs_traces[i]))


_TABLES = {}


def spectrum_table(exp, K):
    """Zeros, eigenvalues, normalisations and traces for k = 1..K."""
    K = int(K)
    if K < 1:
        raise DomainError("K must be >= 1")
    key = (exp.alpha, K)
    if key in _TABLES:
        return _TABLES[key]
    a, nu, kap = exp.alpha, exp.nu, exp.kappa
    j = bessel_zeros(nu, K)
    dj = np.abs(bessel_j_prime(nu, j))
    lam = kap * kap * j * j
    norm = math.sqrt(2.0 - a) / dj
    base = j ** nu / (2.0 ** nu * gamma(nu + 1.0) * dj)
    if exp.weak:
        # (x^a phi_k')(0)
        obs = (1.0 - a) * math.sqrt(2.0 - a) * base
        gain = obs
    else:
        # phi_k(0); a flux input enters with the opposite sign
        obs = math.sqrt(2.0 * kap) * base
        gain = -obs
    table = SpectrumTable(exp, j, lam, norm, obs, gain)
    _TABLES[key] = table
    return table


def mode(exp, k):
    """SpectralMode for index k >= 1."""
    if int(k) < 1:
        raise DomainError("mode index k must be >= 1")
    return spectrum_table(exp, max(int(k), 1)).mode(int(k))


def eigenvalues(exp, K):
    return spectrum_table(exp, K).eigenvalues.copy()


def input_gains(exp, K):
    """Signed coupling g_k of a boundary input into mode k.

    dc_k/dt = -lambda_k c_k + g_k h with g_k = +o_k (Dirichlet input) in the
    weak regime and g_k = -o_k (flux input) in the strong regime.
    """
    return spectrum_table(exp, K).input_gains.copy()


def eigenfunction_eval(exp, k, x):
    """Normalised eigenfunction phi_k at x in (0, 1]."""
    xa = np.asarray(x, dtype=float)
    if np.any(xa <= 0.0) or np.any(xa > 1.0):
        raise DomainError("eigenfunction_eval needs 0 < x <= 1")
    m = mode(exp, k)
    val = m.norm_factor * xa ** ((1.0 - exp.alpha) / 2.0) * bessel_j(exp.nu, m.zero * xa ** exp.kappa)
    return float(val) if np.ndim(val) == 0 else val


def eigenfunctions(exp, K, x):
    """Matrix Phi[k-1, i] = phi_k(x_i) for k = 1..K."""
    xa = np.asarray(x, dtype=float).ravel()
    t = spectrum_table(exp, K)
    s = xa ** exp.kappa
    pref = xa ** ((1.0 - exp.alpha) / 2.0)
    out = np.empty((K, len(xa)))
    for i in range(K):
        out[i] = t.norm_factors[i] * pref * bessel_j(exp.nu, t.zeros[i] * s)
    return out


def gram_matrix(exp, K, epsabs=1e-12):
    """Quadrature Gram matrix of phi_1..phi_K on (0, 1).

    Uses s = x^kappa, which turns the integrand into
    (c_i c_j / kappa) s J_nu(j_i s) J_nu(j_j s) on (0, 1).
    """
    t = spectrum_table(exp, K)
    iu = np.triu_indices(K)

    def f(s):
        v = bessel_j(exp.nu, t.zeros * s)
        prod = np.outer(v, v)[iu]
        return prod * s

    val, err = quad_vec(f, 0.0, 1.0, epsabs=epsabs, epsrel=1e-12, limit=2000)
    G = np.zeros((K, K))
    G[iu] = val
    G = G + np.triu(G, 1).T
    c = t.norm_factors
    return G * np.outer(c, c) / exp.kappa


def h1_seminorm_sq(exp, k):
    """Quadrature value of int_0^1 x^alpha phi_k'(x)^2 dx."""
    m = mode(exp, k)
    a, nu, kap, j = exp.alpha, exp.nu, exp.kappa, m.zero

    def f(s):
        # x = s^(1/kappa); x^a phi'^2 dx rewritten in s
        x = s ** (1.0 / kap)
        z = j * s
        J = bessel_j(nu, z)
        Jp = bessel_j_prime(nu, z) if z > 0 else 0.0
        dphi = m.norm_factor * (0.5 * (1.0 - a) * x ** (-0.5 - 0.5 * a) * J
                                + x ** (0.5 - 0.5 * a) * Jp * j * kap * x ** (kap - 1.0))
        return x ** a * dphi ** 2 * x / (kap * s)

    val, _ = quad_vec(f, 1e-300, 1.0, epsabs=1e-12, epsrel=1e-10, limit=2000)
    return float(val)


def trace_extrapolated(exp, k, levels=7):
    """Boundary trace of phi_k by Richardson extrapolation towards x = 0.

    Weak regime: lim x^alpha phi_k'(x); strong regime: lim phi_k(x).
    Both are even power series in s = x^kappa, so the extrapolation is in s^2.
    """
    m = mode(exp, k)
    a, nu, kap, j = exp.alpha, exp.nu, exp.kappa, m.zero
    s0 = 0.5 / j
    vals = []
    for i in range(levels):
        s = s0 / 2.0 ** i
        x = s ** (1.0 / kap)
        z = j * s
        if exp.weak:
            v = m.norm_factor * (0.5 * (1.0 - a) * s ** (-nu) * bessel_j(nu, z)
                                 + j * kap * x ** 0.5 * bessel_j_prime(nu, z))
        else:
            v = m.norm_factor * s ** (-nu) * bessel_j(nu, z)
        vals.append(v)
    # Neville-style Richardson table with ratio 4
    table = list(vals)
    for lev in range(1, levels):
        fac = 4.0 ** lev
        table = [(fac * table[i + 1] - table[i]) / (fac - 1.0) for i in range(len(table) - 1)]
    return float(table[0])


@dataclass
class GapReport:
    rho1: float
    rho2: float
    K: int
    violations: list


def gap_check(exp, K):
    """Check rho1 |k^2 - m^2| <= |lambda_k - lambda_m| <= rho2 |k^2 - m^2|."""
    K = int(K)
    if K < 2:
        raise DomainError("gap_check needs K >= 2")
    lam = eigenvalues(exp, K)
    rho1 = math.pi ** 2 * exp.kappa ** 2 / 4.0
    rho2 = 2.0 * math.pi ** 2 * exp.kappa ** 2
    ks = np.arange(1, K + 1, dtype=float)
    d = np.abs(lam[:, None] - lam[None, :])
    q = np.abs(ks[:, None] ** 2 - ks[None, :] ** 2)
    bad = np.argwhere(np.triu((d < rho1 * q) | (d > rho2 * q), 1))
    violations = [(int(m + 1), int(k + 1), float(d[m, k]), float(rho1 * q[m, k]), float(rho2 * q[m, k]))
                  for m, k in bad]
    return GapReport(rho1, rho2, K, violations)


def gap_table(exp, K):
    """Rows (k, m, gap, lower, upper, ok) for all 1 <= m < k <= K."""
    lam = eigenvalues(exp, K)
    rho1 = math.pi ** 2 * exp.kappa ** 2 / 4.0
    rho2 = 2.0 * math.pi ** 2 * exp.kappa ** 2
    rows = []
    for k in range(2, K + 1):
        for m in range(1, k):
            q = k * k - m * m
            g = abs(lam[k - 1] - lam[m - 1])
            rows.append((k, m, g, rho1 * q, rho2 * q, rho1 * q <= g <= rho2 * q))
    return rows


def counting_function(lambdas, r):
    """Number of entries with modulus <= r in a list sorted by modulus."""
    mods = np.abs(np.asarray(lambdas))
    return int(np.searchsorted(mods, r, side="right"))


def fd_discretization(exp, M):
    """Vertex-centred finite-volume discretisation on a graded mesh.

    Nodes x_i = (i/M)^{2/(2-alpha)}.  Returns (x, volumes, lower, diag) where
    the stiffness of -(x^alpha u')' acting on the unknowns is the symmetric
    tridiagonal matrix with the given diagonal and off-diagonal.  Unknowns are
    nodes 1..M-1 in the weak regime and 0..M-1 in the strong regime.
    The flux coefficient between nodes 0 and 1 is also returned so that a
    Dirichlet value at x = 0 can be lifted into the first equation.
    """
    M = int(M)
    x = (np.arange(M + 1) / M) ** (2.0 / (2.0 - exp.alpha))
    xm = 0.5 * (x[1:] + x[:-1])
    a = exp.alpha
    # flux coefficient 1 / int_{x_i}^{x_{i+1}} x^{-alpha} dx, exact for the
    # stationary profiles 1 and x^{1-alpha}; the first edge of the strong
    # regime, where that integral diverges, uses the midpoint value
    if a == 0.0:
        c = 1.0 / np.diff(x)
    elif a == 1.0:
        c = np.empty(M)
        c[1:] = 1.0 / np.log(x[2:] / x[1:-1])
        c[0] = xm[0] / x[1]
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            pw = x ** (1.0 - a)
            c = (1.0 - a) / np.diff(pw)
        if a > 1.0:
            c[0] = xm[0] ** a / x[1]
    vol = np.empty(M + 1)
    vol[0] = xm[0]
    vol[1:M] = xm[1:] - xm[:-1]
    vol[M] = 1.0 - xm[-1]
    first = 1 if exp.weak else 0
    idx = np.arange(first, M)
    diag = np.empty(len(idx))
    for n, i in enumerate(idx):
        left = c[i - 1] if i > 0 else 0.0
        diag[n] = left + c[i]
    off = -c[first:M - 1]
    return x, vol, idx, diag, off, c[0]


def sturm_liouville_fd_oracle(exp, K, mesh_size):
    """First K eigenvalues of the graded-mesh finite-volume operator."""
    M = int(mesh_size)
    if M < 200:
        raise DomainError("mesh_size must be >= 200")
    x, vol, idx, diag, off, _ = fd_discretization(exp, M)
    # generalised problem S u = lambda V u with diagonal V
    w = 1.0 / np.sqrt(vol[idx])
    d = diag * w * w
    e = off * w[:-1] * w[1:]
    try:
        vals = eigh_tridiagonal(d, e, select="i", select_range=(0, K - 1), eigvals_only=True)
    except Exception as exc:  # LAPACK failure
        raise NumericalError(f"tridiagonal eigen-solver failed: {exc}") from exc
    return np.sort(vals)
