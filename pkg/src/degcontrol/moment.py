"""Moment method for boundary null control of the 1-d coupled system.

Writing s = T - t and u(s) = h(T - s), mode k is driven to zero at time T
when

    int_0^T e^{(A - lambda_k) s} B u(s) ds = -e^{(A - lambda_k) T} c_k(0) / g_k.

Expanding e^{As} over the spectral projectors of A turns this into moments
int_0^T s^sigma e^{-Lambda s} u(s) ds against the exponents
Lambda = lambda_k - mu_l.  The control is the minimal-norm combination of a
biorthogonal family, built from the Gram matrix of the exponentials in
extended precision (mpmath).  The Gram matrices are so ill-conditioned that
binary64 cannot reach the biorthogonality tolerance even with exact
coefficients, see the package README.
"""

import cmath
import math
from dataclasses import dataclass, field

import gmpy2
import mpmath
import numpy as np
from scipy.linalg import expm

from .errors import ConditioningError, ControllabilityError, DomainError, NumericalError
from .kalman import check_controllability, eigen_structure
from .solver_1d import ModalState1D, SampledControl
from .spectrum import eigenvalues, spectrum_table

BIORTHO_TOL = 1e-8
NODE_MERGE_TOL = 1e-9


def _pe_integral(p, s, T, exp_fn, tiny):
    """int_0^T t^p e^{-s t} dt for integer p >= 0."""
    z = s * T
    if z == 0:
        return T ** (p + 1) / (p + 1)
    if abs(z) <= p + 1:
        # Kummer series T^{p+1} e^{-z} sum_k z^k / ((p+1)(p+2)...(p+1+k))
        term = 1 / (p + 1) + 0 * z
        total = term
        k = 0
        while True:
            k += 1
            term = term * z / (p + 1 + k)
            total += term
            if abs(term) <= tiny * abs(total) or k > 100000:
                break
        return T ** (p + 1) * exp_fn(-z) * total
    E = exp_fn(-z)
    if abs(E) * (p + 1) * max(1, abs(z)) ** p <= tiny:
        # the endpoint terms are below working precision
        return math.factorial(p) / s ** (p + 1)
    # upward recurrence I_q = (q I_{q-1} - T^q e^{-sT}) / s, stable for |sT| > p
    v = (1 - E) / s
    Tq = 1
    for q in range(1, p + 1):
        Tq = Tq * T
        v = (q * v - Tq * E) / s
    return v


def gram_entry(La, a, Lb, b, T):
    """int_0^T t^a e^{-La t} conj(t^b e^{-Lb t}) dt in binary64."""
    if a < 0 or b < 0:
        raise DomainError("powers must be >= 0")
    if not (T > 0) or math.isinf(T):
        s = complex(La) + complex(Lb).conjugate()
        if math.isinf(T):
            if s.real <= 0:
                raise DomainError("divergent integral on an infinite horizon")
            return math.factorial(a + b) / s ** (a + b + 1)
        raise DomainError("T must be > 0")
    s = complex(La) + complex(Lb).conjugate()
    return complex(_pe_integral(a + b, s, float(T), cmath.exp, 1e-17))


def _mp_integral(p, s, T):
    return _pe_integral(p, s, T, mpmath.exp, mpmath.eps)


@dataclass
class MomentSystem:
    """Exponents (Lambda, max_power) on (0, T) with targets per exponential.

    The exponential list is e_i(s) = s^sigma e^{-Lambda s} for every node and
    sigma = 0..max_power-1, in node order.  rhs has one row per exponential
    and one column per control channel.
    """

    nodes: list
    T: float
    rhs: np.ndarray

    def __post_init__(self):
        for L, pw in self.nodes:
            if pw < 1:
                raise DomainError("max_power must be >= 1")
        vals = [complex(L) for L, _ in self.nodes]
        for i in range(len(vals)):
            for j in range(i):
                if abs(vals[i] - vals[j]) <= NODE_MERGE_TOL * max(1.0, abs(vals[i])):
                    raise DomainError("moment nodes must be pairwise distinct")
        rhs = np.asarray(self.rhs, dtype=complex)
        if rhs.ndim == 1:
            rhs = rhs.reshape(-1, 1)
        if rhs.shape[0] != sum(pw for _, pw in self.nodes):
            raise DomainError("rhs length must equal the total number of exponentials")
        self.rhs = rhs

    @property
    def exponentials(self):
        return [(complex(L), s) for L, pw in self.nodes for s in range(pw)]


@dataclass
class BiorthoFamily:
    """Psi_i(s) = s^p sum_j X_ij conj(e_j(s)) with int Psi_i e_k = delta_ik.

    coefficients and gram are mpmath matrices at precision dps; the Gram is
    G_jk = int_0^T s^p e_k conj(e_j) ds and coefficients = G^{-1}.
    cond_estimate is the 1-norm condition number after symmetric diagonal
    equilibration; cond_raw is the same before equilibration.
    """

    exponentials: list
    T: float
    weight_power: int
    coefficients: object
    gram: object
    cond_estimate: float
    cond_raw: float
    residual: float
    dps: int

    def psi(self, i, s):
        """Evaluate Psi_i at the points s (binary64 output)."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        out = np.zeros(len(s), dtype=complex)
        with mpmath.workdps(self.dps):
            for n, sv in enumerate(s):
                sv = mpmath.mpf(sv)
                acc = mpmath.mpc(0)
                for j, (L, sig) in enumerate(self.exponentials):
                    acc += self.coefficients[i, j] * sv ** sig * mpmath.exp(-mpmath.conj(mpmath.mpc(L)) * sv)
                out[n] = complex(acc * sv ** self.weight_power)
        return out

    def pairing(self, i, k):
        """int_0^T Psi_i e_k computed in extended precision."""
        with mpmath.workdps(self.dps):
            L = len(self.exponentials)
            return complex(mpmath.fsum(self.coefficients[i, j] * self.gram[j, k] for j in range(L)))


def _mp_gram(exps, T, p):
    L = len(exps)
    G = mpmath.matrix(L, L)
    mT = mpmath.mpf(T)
    lam = [mpmath.mpc(x) for x, _ in exps]
    for j in range(L):
        for k in range(j, L):
            s = lam[k] + mpmath.conj(lam[j])
            v = _mp_integral(p + exps[j][1] + exps[k][1], s, mT)
            G[j, k] = v
            G[k, j] = mpmath.conj(v)
    return G


def _norm1(M):
    return max(mpmath.fsum(abs(M[i, j]) for i in range(M.rows)) for j in range(M.cols))


def _equilibrated_cond(G):
    L = G.rows
    d = [1 / mpmath.sqrt(abs(G[i, i])) for i in range(L)]
    Ge = mpmath.matrix(L, L)
    for i in range(L):
        for j in range(L):
            Ge[i, j] = d[i] * G[i, j] * d[j]
    Xe = mpmath.inverse(Ge)
    return Ge, Xe, d, _norm1(Ge) * _norm1(Xe)


def _admissible_size(G, cond_cap):
    best = 0
    for n in range(1, G.rows + 1):
        _, _, _, c = _equilibrated_cond(G[:n, :n])
        if c > cond_cap:
            break
        best = n
    return best


def build_biortho(ms, cond_cap=1e12, weight_power=0, dps=None, report_admissible=True):
    """Minimal-norm biorthogonal family for the exponentials of ms.

    The working precision grows with the conditioning so that the reported
    residual max|G X - I| stays far below BIORTHO_TOL.  Raises
    ConditioningError when the equilibrated condition number exceeds
    cond_cap, naming the largest admissible number of exponentials.
    """
    if not cond_cap > 1:
        raise DomainError("cond_cap must be > 1")
    p = int(weight_power)
    if p < 0:
        raise DomainError("weight_power must be >= 0")
    exps = ms.exponentials
    L = len(exps)
    work = int(dps) if dps else 40
    for _ in range(8):
        with mpmath.workdps(work):
            G = _mp_gram(exps, ms.T, p)
            Ge, Xe, d, cond_eq = _equilibrated_cond(G)
            digits = float(mpmath.log10(cond_eq)) if cond_eq > 0 else 0.0
            if digits + 25 > work and not dps:
                work = int(digits) + 35
                continue
            if cond_eq > cond_cap:
                n_ok = _admissible_size(G, cond_cap) if report_admissible else None
                raise ConditioningError(
                    f"Gram condition number {float(cond_eq):.3e} exceeds cap {cond_cap:.1e}; "
                    f"at most {n_ok} exponentials are admissible",
                    cond=float(cond_eq), admissible=n_ok, size=L)
            X = mpmath.matrix(L, L)
            for i in range(L):
                for j in range(L):
                    X[i, j] = d[i] * Xe[i, j] * d[j]
            R = G * X
            res = max(abs(R[i, j] - (1 if i == j else 0)) for i in range(L) for j in range(L))
            cond_raw = _norm1(G) * _norm1(X)
            fam = BiorthoFamily(exps, float(ms.T), p, X, G, float(cond_eq), float(cond_raw),
                                float(res), work)
        if fam.residual > BIORTHO_TOL:
            raise NumericalError("biorthogonality residual above tolerance",
                                 residual=fam.residual, dps=work)
        return fam
    raise NumericalError("could not reach a working precision for the Gram solve")


@dataclass
class ExponentialControl:
    """h(t) = u(T - t) with u(s) = sum_j a_j s^{p_j} e^{-r_j s}, a_j in C^m."""

    T: float
    rates: list
    powers: list
    coeffs: list
    dps: int

    @property
    def m(self):
        return len(self.coeffs[0]) if self.coeffs else 1

    def moments(self, Lam, sigma):
        """int_0^T s^sigma e^{-Lam s} u(s) ds for every channel."""
        with mpmath.workdps(self.dps):
            mT = mpmath.mpf(self.T)
            Lm = mpmath.mpc(Lam)
            out = []
            for q in range(self.m):
                acc = [self.coeffs[j][q] * _mp_integral(sigma + self.powers[j], Lm + self.rates[j], mT)
                       for j in range(len(self.rates))]
                out.append(complex(mpmath.fsum(acc)))
        return np.array(out)

    def l2_norm(self):
        with mpmath.workdps(self.dps):
            mT = mpmath.mpf(self.T)
            tot = mpmath.mpf(0)
            J = len(self.rates)
            for i in range(J):
                for j in range(J):
                    I = _mp_integral(self.powers[i] + self.powers[j],
                                     mpmath.conj(self.rates[i]) + self.rates[j], mT)
                    for q in range(self.m):
                        tot += mpmath.re(mpmath.conj(self.coeffs[i][q]) * self.coeffs[j][q] * I)
            return float(mpmath.sqrt(max(tot, 0)))

    def evaluate(self, t):
        """Values at arbitrary times t in [0, T], shape (len(t), m)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.zeros((len(t), self.m), dtype=complex)
        with mpmath.workdps(self.dps):
            for n, tv in enumerate(t):
                s = mpmath.mpf(self.T) - mpmath.mpf(tv)
                vals = [mpmath.fsum(self.coeffs[j][q] * s ** self.powers[j] * mpmath.exp(-self.rates[j] * s)
                                    for j in range(len(self.rates))) for q in range(self.m)]
                out[n] = [complex(v) for v in vals]
        return out

    def sample(self, N):
        """SampledControl on N + 1 uniform points of [0, T].

        Runs in gmpy2 arithmetic at the family's precision; the exponentials
        advance by one multiplication per grid step.
        """
        N = int(N)
        if N < 1:
            raise DomainError("N must be >= 1")
        bits = int(self.dps * 3.33) + 16
        out = np.zeros((N + 1, self.m), dtype=complex)
        with gmpy2.context(gmpy2.get_context(), precision=bits):
            T = gmpy2.mpfr(repr(self.T))
            ds = T / N
            s = np.array([ds * n for n in range(N + 1)], dtype=object)
            spow = {p: s ** p for p in set(self.powers)}
            acc = [np.zeros(N + 1, dtype=object) for _ in range(self.m)]
            for j, r in enumerate(self.rates):
                step = gmpy2.exp(-_to_gmpy(r) * ds)
                col = np.empty(N + 1, dtype=object)
                cur = gmpy2.mpc(1)
                for n in range(N + 1):
                    col[n] = cur
                    cur = cur * step
                col = col * spow[self.powers[j]]
                for q in range(self.m):
                    acc[q] = acc[q] + _to_gmpy(self.coeffs[j][q]) * col
            # s_n = n ds runs from t = T down to t = 0
            for q in range(self.m):
                out[::-1, q] = [complex(v) for v in acc[q]]
        if np.max(np.abs(out.imag), initial=0.0) <= 1e-13 * max(np.max(np.abs(out)), 1e-300):
            out = out.real
        grid = np.linspace(0.0, self.T, N + 1)
        return SampledControl(grid, out)


def _to_gmpy(z):
    """Exact conversion of an mpmath number to gmpy2 mpc."""
    z = mpmath.mpc(z)

    def part(x):
        sign, man, exp, _ = x._mpf_
        if not man:
            return gmpy2.mpfr(0)
        v = gmpy2.mul_2exp(gmpy2.mpfr(int(man)), int(exp))
        return -v if sign else v

    return gmpy2.mpc(part(z.real), part(z.imag))


def control_from_family(fam, moments):
    """Exponential control u = sum_i Psi_i m_i for moment matrix m (L x channels)."""
    m = np.asarray(moments, dtype=complex)
    if m.ndim == 1:
        m = m.reshape(-1, 1)
    L = len(fam.exponentials)
    with mpmath.workdps(fam.dps):
        coeffs = []
        for j in range(L):
            row = []
            for q in range(m.shape[1]):
                row.append(mpmath.fsum(fam.coefficients[i, j] * mpmath.mpc(m[i, q]) for i in range(L)))
            coeffs.append(row)
        rates = [mpmath.conj(mpmath.mpc(Lj)) for Lj, _ in fam.exponentials]
    powers = [sig + fam.weight_power for _, sig in fam.exponentials]
    return ExponentialControl(fam.T, rates, powers, coeffs, fam.dps)


def spectral_projectors(A):
    """[(mu, chain, [C_0, C_1, ...])] with C_sigma = (A - mu)^sigma P / sigma!.

    P is the Riesz projector of the eigenvalue cluster around mu, computed by
    the trapezoidal rule on a circle, so that
    e^{As} = sum_l e^{mu_l s} sum_sigma s^sigma C_{l,sigma}.
    """
    A = np.asarray(A, dtype=complex)
    n = A.shape[0]
    struct = eigen_structure(A)
    out = []
    vals = [e["value"] for e in struct]
    for e in struct:
        mu = e["value"]
        if len(struct) == 1:
            P = np.eye(n, dtype=complex)
        else:
            gap = min(abs(mu - v) for v in vals if v is not mu)
            r = 0.5 * gap
            Q = 256
            P = np.zeros((n, n), dtype=complex)
            for q in range(Q):
                z = r * np.exp(2j * np.pi * q / Q)
                P += z * np.linalg.inv((mu + z) * np.eye(n) - A)
            P /= Q
        N = (A - mu * np.eye(n)) @ P
        Cs = [P]
        cur = P
        for s in range(1, e["chain"]):
            cur = N @ cur / s
            Cs.append(cur)
        out.append((mu, e["chain"], Cs))
    return out


@dataclass
class MomentProblem:
    """Assembled moment problem of one truncated modal system."""

    system: MomentSystem
    constraint: np.ndarray
    targets: np.ndarray
    node_of: dict
    shift: float
    rank: int
    expected_rank: int


def assemble_moments(exp, sys, coeffs, T, shift=0.0, tol=1e-9):
    """Moment nodes, constraint matrix and minimal-norm moment vectors.

    Mode k (1-based) obeys dc_k/dt = (A - (lambda_k + shift)) c_k + g_k B h.
    The unknowns are the moment vectors m_(node, sigma) in C^m; the
    constraint matrix maps them to the n K targets -e^{M_k T} c_k(0) / g_k.
    """
    coeffs = np.asarray(coeffs, dtype=complex)
    K = coeffs.shape[0]
    n, m = sys.n, sys.m
    tab = spectrum_table(exp, K)
    lam = tab.eigenvalues + shift
    g = tab.input_gains
    proj = spectral_projectors(sys.A)
    nodes = []
    node_of = {}
    for k in range(K):
        for l, (mu, tau, _) in enumerate(proj):
            Lam = complex(lam[k] - mu)
            for i, (L0, pw) in enumerate(nodes):
                if abs(L0 - Lam) <= NODE_MERGE_TOL * max(1.0, abs(Lam)):
                    nodes[i] = (L0, max(pw, tau))
                    node_of[(k, l)] = i
                    break
            else:
                node_of[(k, l)] = len(nodes)
                nodes.append((Lam, tau))
    offsets = np.cumsum([0] + [pw for _, pw in nodes])
    ncols = int(offsets[-1]) * m
    C = np.zeros((n * K, ncols), dtype=complex)
    targets = np.zeros(n * K, dtype=complex)
    EA = expm(sys.A * T)
    for k in range(K):
        for l, (mu, tau, Cs) in enumerate(proj):
            base = offsets[node_of[(k, l)]]
            for sig in range(tau):
                col = (base + sig) * m
                C[k * n:(k + 1) * n, col:col + m] = Cs[sig] @ sys.B
        targets[k * n:(k + 1) * n] = -np.exp(-lam[k] * T) * (EA @ coeffs[k]) / g[k]
    U, s, Vh = np.linalg.svd(C, full_matrices=False)
    rank = int(np.sum(s > tol * s[0])) if s.size and s[0] > 0 else 0
    if rank < n * K:
        mom = None
    else:
        mom = Vh.conj().T @ ((U.conj().T @ targets) / s)
        mom = mom.reshape(-1, m)
    rhs = mom if mom is not None else np.zeros((int(offsets[-1]), m), dtype=complex)
    ms = MomentSystem(nodes, float(T), rhs)
    return MomentProblem(ms, C, targets, node_of, float(shift), rank, n * K)


def moment_rhs(w0, T, shift=0.0):
    """MomentSystem whose solution drives every retained mode of w0 to zero.

    For n = 1 and A = 0 the targets are -e^{-lambda_k T} c_k / g_k.
    Raises ControllabilityError when the moment constraints are rank deficient.
    """
    if not T > 0:
        raise DomainError("T must be > 0")
    mp_ = assemble_moments(w0.exp, w0.sys, w0.coeffs, T, shift)
    if mp_.rank < mp_.expected_rank:
        raise ControllabilityError("moment constraints are rank deficient",
                                   rank=mp_.rank, expected=mp_.expected_rank)
    return mp_.system


def exact_final_coeffs(exp, sys, c0, ctrl, T, K, shift=0.0):
    """Final modal coefficients for modes 1..K under an ExponentialControl.

    Initial coefficients beyond len(c0) are zero.  The moments are evaluated
    in extended precision, so the result is limited only by the projectors.
    """
    c0 = np.asarray(c0, dtype=complex)
    if c0.ndim == 1:
        c0 = c0.reshape(-1, 1)
    tab = spectrum_table(exp, K)
    lam = tab.eigenvalues + shift
    g = tab.input_gains
    proj = spectral_projectors(sys.A)
    EA = expm(sys.A * T)
    out = np.zeros((K, sys.n), dtype=complex)
    for k in range(K):
        if k < c0.shape[0]:
            out[k] = np.exp(-lam[k] * T) * (EA @ c0[k])
        acc = np.zeros(sys.n, dtype=complex)
        for mu, tau, Cs in proj:
            for sig in range(tau):
                mom = ctrl.moments(lam[k] - mu, sig)
                acc += Cs[sig] @ (sys.B @ mom)
        out[k] += g[k] * acc
    return out


@dataclass
class ControlResult:
    control: SampledControl
    exact: ExponentialControl
    l2_norm: float
    cond: float
    cond_raw: float
    residual: float
    weight_power: int
    retained_residual: float
    tail_l2: float
    tail_modes: int
    dps: int
    moment_system: MomentSystem
    notes: list = field(default_factory=list)


def _tail_l2(exp, sys, c0, ctrl, T, K, K_tail):
    if K_tail <= K:
        return 0.0
    full = exact_final_coeffs(exp, sys, c0, ctrl, T, K_tail)
    return float(np.linalg.norm(full[K:]))


def default_samples(T, nodes):
    top = max(abs(complex(L)) for L, _ in nodes)
    return int(max(4096, math.ceil(T * top / 0.02)))


def synthesize_control(w0, T, K=None, taper="auto", cond_cap=1e12, samples=None,
                       tail_tol=1e-3, tail_modes=None, check_kalman=True):
    """Null control for the first K modes of w0 over (0, T).

    taper   weight exponent p of the minimal s^{-p}-weighted norm, or "auto".
            With p > 0 the control and its first p - 1 derivatives vanish at
            t = T, which keeps the untargeted modes k > K small.  "auto" picks
            the smallest even p <= 16 whose predicted tail L2 norm is at most
            tail_tol times the initial L2 norm.
    Returns a ControlResult; the sampled control has at least 4096 cells.
    """
    if not T > 0:
        raise DomainError("T must be > 0")
    K = w0.K if K is None else int(K)
    if K < 1 or K > w0.K:
        raise DomainError("K must lie in [1, w0.K]")
    sys, exp = w0.sys, w0.exp
    if check_kalman:
        verdict = check_controllability(sys, exp, K)
        if not verdict.overall:
            k = verdict.first_failure
            raise ControllabilityError(
                f"rank condition fails at k={k}: rank {verdict.ranks[k - 1]} < {verdict.expected[k - 1]}",
                k=k, rank=verdict.ranks[k - 1], expected=verdict.expected[k - 1])
    c0 = w0.coeffs[:K]
    if not np.any(c0):
        grid = np.linspace(0.0, T, (int(samples) if samples else 4096) + 1)
        zero = SampledControl(grid, np.zeros((len(grid), sys.m)))
        ms = moment_rhs(w0.copy(c0), T)
        ctrl = ExponentialControl(T, [], [], [], 30)
        return ControlResult(zero, ctrl, 0.0, 1.0, 1.0, 0.0, 0, 0.0, 0.0, 0, 30, ms)
    ms = moment_rhs(w0.copy(c0), T)
    K_tail = int(tail_modes) if tail_modes is not None else max(400, 8 * K)
    w_norm = float(np.linalg.norm(w0.coeffs))
    candidates = list(range(0, 17, 2)) if taper == "auto" else [int(taper)]
    notes = []
    chosen = None
    for p in candidates:
        try:
            fam = build_biortho(ms, cond_cap, p)
        except ConditioningError as exc:
            notes.append(f"p={p}: {exc}")
            continue
        ctrl = control_from_family(fam, ms.rhs)
        tail = _tail_l2(exp, sys, w0.coeffs, ctrl, T, K, K_tail) if taper == "auto" or tail_modes else float("nan")
        chosen = (p, fam, ctrl, tail)
        if taper != "auto" or tail <= tail_tol * w_norm:
            break
        notes.append(f"p={p}: predicted tail {tail:.3e}")
    if chosen is None:
        raise ConditioningError("no admissible taper; " + "; ".join(notes))
    p, fam, ctrl, tail = chosen
    final = exact_final_coeffs(exp, sys, w0.coeffs, ctrl, T, K)
    lam = eigenvalues(exp, K)
    hm1_0 = math.sqrt(float(np.sum(np.abs(w0.coeffs[:K]) ** 2 / lam[:, None])))
    hm1_T = math.sqrt(float(np.sum(np.abs(final) ** 2 / lam[:, None])))
    ratio = hm1_T / hm1_0 if hm1_0 > 0 else 0.0
    N = int(samples) if samples else default_samples(T, ms.nodes)
    sampled = ctrl.sample(N)
    return ControlResult(sampled, ctrl, ctrl.l2_norm(), fam.cond_estimate, fam.cond_raw,
                         fam.residual, p, ratio, tail, K_tail, fam.dps, ms, notes)


@dataclass
class CostPoint:
    T: float
    norm: float | None
    T_log_norm: float | None
    refused: str | None = None


def cost_curve(w0, T_list, K=None, weight_power=0, cond_cap=1e12):
    """Control norms for a fixed initial state over several horizons.

    Uses the plain minimal L2 norm (weight_power 0) by default, for which the
    optimal cost cannot increase with T.  Conditioning refusals are recorded
    as gaps.
    """
    out = []
    for T in T_list:
        if not T > 0:
            raise DomainError("all horizons must be > 0")
        try:
            ms = moment_rhs(w0.copy(w0.coeffs[:K] if K else None), T)
            fam = build_biortho(ms, cond_cap, weight_power)
            ctrl = control_from_family(fam, ms.rhs)
            nrm = ctrl.l2_norm()
            out.append(CostPoint(float(T), nrm, float(T) * math.log(nrm) if nrm > 0 else None))
        except ConditioningError as exc:
            out.append(CostPoint(float(T), None, None, str(exc)))
    return out


def unobservable_direction(sys, exp, K):
    """Adjoint terminal state invisible to the boundary observation.

    Finds the first k <= K and an eigenvalue mu of A - lambda_k with a left
    eigenvector v satisfying B^* v = 0 (Hautus failure), and returns the
    modal state with v in mode k.  Returns None when no such k exists.
    """
    lam = eigenvalues(exp, K)
    n = sys.n
    for k in range(K):
        for e in eigen_structure(sys.A):
            mu = e["value"]
            H = np.vstack([(sys.A - mu * np.eye(n)).conj().T, sys.B.conj().T])
            _, s, Vh = np.linalg.svd(H)
            if s[-1] <= 1e-10 * max(1.0, s[0]) or len(s) < n:
                v = Vh[-1].conj()
                coeffs = np.zeros((K, n), dtype=complex)
                coeffs[k] = v / np.linalg.norm(v)
                return ModalState1D(coeffs, exp, sys)
    return None
