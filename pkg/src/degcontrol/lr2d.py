"""Boundary control on the unit square by alternating control and dissipation.

The operator -div(D grad) with D = diag(x^a1, y^a2) separates, so states are
kept as coefficients c_{k,j} in C^n against phi_{a1,k}(x) phi_{a2,j}(y).
The control acts through the boundary x = 0 on the window y in omega.  It is
written as q(t, y) = sum_{j <= gamma} h_j(t) 1_omega(y) phi_{a2,j}(y); mode
(k, j) then feels sum_j' G_{jj'} h_j' with G the restriction Gram on omega.
The low y-modes are nulled by 1-d moment controls mapped back through G^{-1},
after which the free flow damps everything above the cutoff.
"""

import math
from dataclasses import dataclass, field

import mpmath
import numpy as np
from scipy.linalg import eigh_tridiagonal, expm

from .errors import ConditioningError, ControllabilityError, DomainError, NumericalError
from .kalman import CoupledSystem, check_controllability
from .moment import (_mp_integral, assemble_moments, build_biortho, control_from_family,
                     exact_final_coeffs, spectral_projectors)
from .special_functions import bessel_zeros_mp
from .spectrum import eigenvalues, eigenfunctions, fd_discretization, spectrum_table


@dataclass
class ModalState2D:
    """Coefficients c[k, j] (shape (K, J, n)) of a state on the unit square."""

    coeffs: np.ndarray
    exps: tuple
    sys: CoupledSystem

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.ndim == 2 and self.sys.n == 1:
            c = c[:, :, None]
        if c.ndim != 3 or c.shape[2] != self.sys.n:
            raise DomainError(f"coeffs must have shape (K, J, {self.sys.n})")
        if c.shape[0] < 1 or c.shape[1] < 1:
            raise DomainError("K and J must be >= 1")
        if not np.all(np.isfinite(c)):
            raise DomainError("coefficients must be finite")
        if len(self.exps) != 2:
            raise DomainError("exps must hold the x and y exponents")
        self.coeffs = c

    @property
    def K(self):
        return self.coeffs.shape[0]

    @property
    def J(self):
        return self.coeffs.shape[1]

    def copy(self, coeffs=None):
        return ModalState2D(self.coeffs.copy() if coeffs is None else coeffs, self.exps, self.sys)

    def weights(self):
        lam = eigenvalues(self.exps[0], self.K)
        mu = eigenvalues(self.exps[1], self.J)
        return lam[:, None] + mu[None, :]


def zero_state_2d(exps, sys, K, J):
    return ModalState2D(np.zeros((K, J, sys.n), dtype=complex), exps, sys)


def norm_hm1_2d(u):
    w = u.weights()
    return float(np.sqrt(np.sum(np.abs(u.coeffs) ** 2 / w[:, :, None])))


def norm_h1_2d(u):
    w = u.weights()
    return float(np.sqrt(np.sum(np.abs(u.coeffs) ** 2 * w[:, :, None])))


def free_evolution(u, duration):
    """Exact flow without control over the given duration."""
    if duration < 0:
        raise DomainError("duration must be >= 0")
    decay = np.exp(-u.weights() * duration)
    E = expm(u.sys.A * duration)
    return u.copy(decay[:, :, None] * (u.coeffs @ E.T))


# --- schedule -------------------------------------------------------------

@dataclass(frozen=True)
class LRSchedule:
    T: float
    rho: float
    beta: int
    alpha_hat: float
    intervals: tuple
    cutoffs: tuple
    K_stop: int

    @property
    def end_of_loop(self):
        a, Tk = self.intervals[-1]
        return a + 2 * Tk

    def series_sum(self):
        """2 sum_{k >= 0} T_k summed until the terms drop below rounding."""
        q = 2.0 ** (-self.rho)
        first = self.alpha_hat / self.beta
        stop = 1e-17 * self.T * (1.0 - q)
        terms = []
        Tk = first
        k = 0
        while Tk > stop:
            terms.append(Tk)
            k += 1
            Tk = first * q ** k
        return 2.0 * math.fsum(terms)


def make_schedule(T, rho, beta=None, K_stop=None, target=None):
    """Geometric partition of (0, T) into control and dissipation phases.

    beta defaults to ceil(2 / T).  K_stop defaults to 6; given a target
    instead, it is the first k with exp(-beta 2^{k(2 - rho)}) <= target.
    """
    T = float(T)
    rho = float(rho)
    if not (T > 0 and math.isfinite(T)):
        raise DomainError("T must be finite and > 0")
    if not 0 < rho < 1:
        raise DomainError("rho must lie in (0, 1)")
    if beta is None:
        beta = math.ceil(2.0 / T)
    if int(beta) != beta or beta < 1:
        raise DomainError("beta must be an integer >= 1")
    beta = int(beta)
    if K_stop is None:
        if target is not None:
            if not 0 < target < 1:
                raise DomainError("target must lie in (0, 1)")
            K_stop = 1
            while math.exp(-beta * 2.0 ** (K_stop * (2 - rho))) > target and K_stop < 30:
                K_stop += 1
        else:
            K_stop = 6
    K_stop = int(K_stop)
    if K_stop < 1:
        raise DomainError("K_stop must be >= 1")
    alpha_hat = beta * T * (1 - 2.0 ** (-rho)) / 2
    intervals = []
    a = 0.0
    for k in range(K_stop):
        Tk = (alpha_hat / beta) * 2.0 ** (-k * rho)
        intervals.append((a, Tk))
        a += 2 * Tk
    sched = LRSchedule(T, rho, beta, alpha_hat, tuple(intervals),
                       tuple(beta * 2 ** k for k in range(K_stop)), K_stop)
    if abs(sched.series_sum() - T) > 1e-12 * T:
        raise NumericalError("schedule does not tile (0, T)", sum=sched.series_sum(), T=T)
    return sched


# --- restriction Gram -----------------------------------------------------

@dataclass
class RestrictionGram:
    """G_ij = int_omega phi_i phi_j dy for the first J y-modes."""

    omega: tuple
    J: int
    G: np.ndarray
    sigma_min: float
    G_mp: object = field(repr=False)
    zeros_mp: list = field(repr=False)
    dps: int = 30

    def sigma_min_of(self, n):
        with mpmath.workdps(self.dps):
            return float(min(mpmath.eigsy(self.G_mp[:n, :n], eigvals_only=True)))


_GRAMS = {}


def _check_omega(omega):
    a, b = (float(v) for v in omega)
    if not 0.0 <= a < b <= 1.0:
        raise DomainError("omega must satisfy 0 <= a < b <= 1")
    return a, b


def _lommel_matrix(nu, z, s):
    """int_0^s r J_nu(z_i r) J_nu(z_j r) dr for all pairs (closed form)."""
    n = len(z)
    M = mpmath.matrix(n, n)
    if s == 0:
        return M
    Jv = [mpmath.besselj(nu, x * s) for x in z]
    Jd = [mpmath.besselj(nu, x * s, derivative=1) for x in z]
    for i in range(n):
        for j in range(i, n):
            if i == j:
                v = s ** 2 / 2 * (Jd[i] ** 2 + (1 - nu ** 2 / (z[i] * s) ** 2) * Jv[i] ** 2)
            else:
                v = s * (z[j] * Jv[i] * Jd[j] - z[i] * Jd[i] * Jv[j]) / (z[i] ** 2 - z[j] ** 2)
            M[i, j] = v
            M[j, i] = v
    return M


def restriction_gram(exp_y, omega, J, dps=None):
    """Window Gram of the y-eigenfunctions, exact up to working precision.

    With r = y^kappa the products phi_i phi_j dy become
    2 r J_nu(j_i r) J_nu(j_j r) dr / (|J'(j_i)| |J'(j_j)|), integrated in
    closed form by the Lommel formulas in mpmath.  The precision is raised
    until the smallest eigenvalue keeps at least 20 significant digits.
    """
    a, b = _check_omega(omega)
    J = int(J)
    if J < 1:
        raise DomainError("J must be >= 1")
    key = (exp_y.alpha, a, b, J)
    if key in _GRAMS and (dps is None or _GRAMS[key].dps >= dps):
        return _GRAMS[key]
    work = int(dps) if dps else 30 + J
    for _ in range(6):
        with mpmath.workdps(work):
            z = bessel_zeros_mp(exp_y.nu, J, work)
            nu = mpmath.mpf(exp_y.nu)
            kap = mpmath.mpf(exp_y.kappa)
            dJ = [abs(mpmath.besselj(nu, x, derivative=1)) for x in z]
            sa = mpmath.mpf(a) ** kap if a > 0 else mpmath.mpf(0)
            sb = mpmath.mpf(b) ** kap
            D = _lommel_matrix(nu, z, sb) - _lommel_matrix(nu, z, sa)
            G = mpmath.matrix(J, J)
            for i in range(J):
                for j in range(J):
                    G[i, j] = 2 * D[i, j] / (dJ[i] * dJ[j])
            ev = mpmath.eigsy(G, eigvals_only=True)
            smin = min(ev)
            if smin > 0 and -mpmath.log10(smin) + 20 <= work:
                break
            work += 20 + J
    else:
        raise NumericalError("restriction Gram precision did not settle", omega=(a, b), J=J)
    Gf = np.array([[float(G[i, j]) for j in range(J)] for i in range(J)])
    rg = RestrictionGram((a, b), J, Gf, float(smin), G, z, work)
    _GRAMS[key] = rg
    return rg


@dataclass
class SpectralFit:
    """-log sigma_min(G_J) against sqrt(lambda_J), with the bound constant C.

    C is the least constant with -log sigma_min <= C sqrt(lambda_J) + C on
    every J.  slope and intercept are the least-squares affine fit and
    residuals its pointwise relative deviations.
    """

    J: list
    lam: np.ndarray
    sigma_min: np.ndarray
    minus_log: np.ndarray
    C: float
    slope: float
    intercept: float
    residuals: np.ndarray

    def rows(self):
        return [(j, l, s, y, self.C) for j, l, s, y in
                zip(self.J, self.lam, self.sigma_min, self.minus_log)]


def spectral_inequality_fit(exp_y, omega, J_list):
    J_list = [int(j) for j in J_list]
    if not J_list or any(j < 1 for j in J_list):
        raise DomainError("J_list must hold positive integers")
    if any(b <= a for a, b in zip(J_list, J_list[1:])):
        raise DomainError("J_list must be increasing")
    rg = restriction_gram(exp_y, omega, J_list[-1])
    lam = eigenvalues(exp_y, J_list[-1])[np.array(J_list) - 1]
    sig = np.array([rg.sigma_min_of(j) for j in J_list])
    with mpmath.workdps(rg.dps):
        y = np.array([max(0.0, -float(mpmath.log(mpmath.mpf(rg.sigma_min_of(j))))) for j in J_list])
    x = np.sqrt(lam)
    C = float(np.max(y / (x + 1.0)))
    if len(J_list) >= 2:
        slope, intercept = np.polyfit(x, y, 1)
    else:
        slope, intercept = C, C
    fit = slope * x + intercept
    with np.errstate(divide="ignore", invalid="ignore"):
        res = np.where(y > 0, np.abs(y - fit) / np.where(y > 0, y, 1.0), np.abs(y - fit))
    return SpectralFit(J_list, lam, sig, y, C, float(slope), float(intercept), res)


# --- control and dissipation ---------------------------------------------

@dataclass
class ControlField2D:
    """q(t, y) on a grid of the control interval; zero off omega."""

    t: np.ndarray
    y: np.ndarray
    values: np.ndarray


@dataclass
class StepResult:
    state: ModalState2D
    field: ControlField2D | None
    control_norm: float
    gamma: int
    norm_before: float
    norm_after: float
    projected_residual: float
    weight_power: int | None = None
    K_x: int | None = None
    cond: float | None = None
    notes: list = field(default_factory=list)


def _window_inverse(rg, g):
    with mpmath.workdps(rg.dps):
        Gg = rg.G_mp[:g, :g]
        return mpmath.inverse(Gg)


def _mix_rows(rg, Ginv, g):
    """(G[:, :g] G_g^{-1}) for the rows beyond the cutoff."""
    J = rg.J
    out = {}
    with mpmath.workdps(rg.dps):
        for r in range(g, J):
            out[r] = [mpmath.fsum(rg.G_mp[r, i] * Ginv[i, j] for i in range(g)) for j in range(g)]
    return out


def _null_search(u, duration, g, cond_cap, tol, taper, K_x, before):
    ex = u.exps[0]
    sys = u.sys
    K = u.K
    mu = eigenvalues(u.exps[1], u.J)
    lam = eigenvalues(ex, K)
    c = u.coeffs
    tapers = list(range(0, 17, 2)) if taper is None else [int(taper)]
    sizes = list(range(K, 0, -1)) if K_x is None else [int(K_x)]
    notes = []
    for p in tapers:
        for kx in sizes:
            base = assemble_moments(ex, sys, c[:kx, 0], duration)
            if base.rank < base.expected_rank:
                raise ControllabilityError("moment constraints rank deficient", rank=base.rank,
                                           expected=base.expected_rank)
            try:
                fam = build_biortho(base.system, cond_cap, p, report_admissible=False)
            except ConditioningError:
                continue
            ctrls = []
            res2 = 0.0
            for j in range(g):
                if not np.any(c[:, j]):
                    ctrls.append(None)
                    continue
                mp_j = assemble_moments(ex, sys, c[:kx, j], duration)
                ctrl = control_from_family(fam, mp_j.system.rhs)
                ctrls.append(ctrl)
                fin = exact_final_coeffs(ex, sys, c[:, j], ctrl, duration, K) * math.exp(-mu[j] * duration)
                res2 += float(np.sum(np.abs(fin) ** 2 / (lam + mu[j])[:, None]))
            resid = math.sqrt(res2)
            if resid <= tol * before or (taper is not None and K_x is not None):
                return p, kx, fam, ctrls, resid, notes
            notes.append(f"p={p} K_x={kx}: projected residual {resid / before:.2e}")
            break
    raise ConditioningError("no taper and x-truncation meet the step tolerance under the cap; "
                            "reduce the truncation or raise cond_cap", notes=notes)


def _propagate(u, duration, g, rg, Ginv, ctrls):
    """Exact end state of the control interval for every retained mode."""
    ex = u.exps[0]
    sys = u.sys
    K, J = u.K, u.J
    tab = spectrum_table(ex, K)
    lam, gain = tab.eigenvalues, tab.input_gains
    mu = eigenvalues(u.exps[1], J)
    proj = spectral_projectors(sys.A)
    mix = _mix_rows(rg, Ginv, g)
    out = free_evolution(u, duration).coeffs
    for r in range(J):
        sources = [(r, 1.0)] if r < g else [(j, mix[r][j]) for j in range(g)]
        for j, wgt in sources:
            ctrl = ctrls[j] if j < len(ctrls) else None
            if ctrl is None:
                continue
            with mpmath.workdps(ctrl.dps):
                scale = complex(mpmath.mpf(wgt) * mpmath.exp(-mpmath.mpf(mu[j]) * duration))
            for k in range(K):
                acc = np.zeros(sys.n, dtype=complex)
                for m_l, tau, Cs in proj:
                    for sig in range(tau):
                        Lam = lam[k] + mu[r] - mu[j] - m_l
                        acc += Cs[sig] @ (sys.B @ ctrl.moments(Lam, sig))
                out[k, r] += gain[k] * scale * acc
    return u.copy(out)


def _control_norm(u, duration, g, Ginv, ctrls, dps):
    """Exact L2 norm of q over (interval) x omega."""
    mu = eigenvalues(u.exps[1], u.J)
    total = mpmath.mpf(0)
    with mpmath.workdps(dps):
        T = mpmath.mpf(duration)
        idx = [j for j in range(g) if ctrls[j] is not None]
        for j in idx:
            for i in idx:
                cj, ci = ctrls[j], ctrls[i]
                shift = mpmath.mpf(mu[j]) + mpmath.mpf(mu[i])
                pref = mpmath.exp(-shift * T)
                acc = mpmath.mpc(0)
                for a, (ra, pa) in enumerate(zip(cj.rates, cj.powers)):
                    for b, (rb, pb) in enumerate(zip(ci.rates, ci.powers)):
                        I = _mp_integral(pa + pb, ra + mpmath.conj(rb) - shift, T)
                        for q in range(cj.m):
                            acc += cj.coeffs[a][q] * mpmath.conj(ci.coeffs[b][q]) * I
                total += mpmath.re(Ginv[j, i] * pref * acc)
    return float(mpmath.sqrt(max(total, 0)))


def _field(u, duration, g, rg, Ginv, ctrls, nt, ny):
    """Samples of q(t, y) on nt + 1 times and ny points of omega."""
    a, b = rg.omega
    y = np.linspace(a, b, ny)
    mu = eigenvalues(u.exps[1], u.J)
    t = np.linspace(0.0, duration, nt + 1)
    ey = u.exps[1]
    # dual window basis psi_j(y) = sum_j' Ginv[j, j'] phi_j'(y), in mp
    with mpmath.workdps(rg.dps):
        nu = mpmath.mpf(ey.nu)
        kap = mpmath.mpf(ey.kappa)
        z = rg.zeros_mp[:g]
        dJ = [abs(mpmath.besselj(nu, x, derivative=1)) for x in z]
        c0 = mpmath.sqrt(2 - mpmath.mpf(ey.alpha))
        psi = np.zeros((g, ny))
        for n, yv in enumerate(y):
            yv = mpmath.mpf(yv)
            if yv == 0:
                phis = [c0 * (x / 2) ** nu / mpmath.gamma(nu + 1) / d if not ey.weak else mpmath.mpf(0)
                        for x, d in zip(z, dJ)]
            else:
                phis = [c0 / d * yv ** ((1 - mpmath.mpf(ey.alpha)) / 2) * mpmath.besselj(nu, x * yv ** kap)
                        for x, d in zip(z, dJ)]
            for j in range(g):
                psi[j, n] = float(mpmath.fsum(Ginv[j, i] * phis[i] for i in range(g)))
    m = u.sys.m
    vals = np.zeros((nt + 1, ny, m), dtype=complex)
    for j in range(g):
        if ctrls[j] is None:
            continue
        v = ctrls[j].sample(nt).values.reshape(nt + 1, -1)
        gt = np.exp(-mu[j] * t)[:, None] * v
        vals += gt[:, None, :] * psi[j][None, :, None]
    if not np.any(np.abs(vals.imag) > 1e-13 * max(np.abs(vals).max(), 1e-300)):
        vals = vals.real
    return ControlField2D(t, y, vals)


def control_step(u, a, duration, gamma, omega, cond_cap=1e12, tol=1e-6, taper=None, K_x=None,
                 samples=None, ny=33, check_kalman=True):
    """Null the y-modes j <= gamma of u over one control interval.

    taper and K_x fix the weight exponent and the number of targeted x-modes;
    left as None they are searched, smallest taper first, largest K_x first,
    until the projected residual is at most tol relative to the H^{-1} norm.
    samples, if given, is the number of time cells of the returned field.
    """
    if not duration > 0:
        raise DomainError("duration must be > 0")
    g = min(int(gamma), u.J)
    if g < 1:
        raise DomainError("gamma must be >= 1")
    before = norm_hm1_2d(u)
    if not np.any(u.coeffs[:, :g]):
        nxt = free_evolution(u, duration)
        fld = None
        if samples:
            fld = ControlField2D(np.linspace(a, a + duration, int(samples) + 1),
                                 np.linspace(*_check_omega(omega), ny),
                                 np.zeros((int(samples) + 1, ny, u.sys.m)))
        return StepResult(nxt, fld, 0.0, g, before, norm_hm1_2d(nxt), 0.0)
    if check_kalman:
        verdict = check_controllability(u.sys, u.exps[0], u.K)
        if not verdict.overall:
            k = verdict.first_failure
            raise ControllabilityError(f"rank condition fails at x-mode {k}", k=k)
    rg = restriction_gram(u.exps[1], omega, u.J)
    Ginv = _window_inverse(rg, g)
    p, kx, fam, ctrls, resid, notes = _null_search(u, duration, g, cond_cap, tol, taper, K_x, before)
    nxt = _propagate(u, duration, g, rg, Ginv, ctrls)
    proj = nxt.copy(nxt.coeffs.copy())
    proj.coeffs[:, g:] = 0
    qn = _control_norm(u, duration, g, Ginv, ctrls, max(fam.dps, rg.dps))
    fld = None
    if samples:
        fld = _field(u, duration, g, rg, Ginv, ctrls, int(samples), ny)
        fld.t = fld.t + a
    return StepResult(nxt, fld, qn, g, before, norm_hm1_2d(nxt),
                      norm_hm1_2d(proj) / before if before > 0 else 0.0,
                      p, kx, fam.cond_estimate, notes)


def dissipate(u, duration, cutoff, tol=1e-6):
    """Free flow over duration, requiring the modes j <= cutoff to be nulled.

    Raises DomainError naming the offending modes when their H^{-1} part
    exceeds tol times the norm of u.
    """
    if duration < 0:
        raise DomainError("duration must be >= 0")
    g = min(int(cutoff), u.J)
    total = norm_hm1_2d(u)
    if g > 0 and total > 0:
        w = u.weights()[:, :g]
        part = np.abs(u.coeffs[:, :g]) ** 2 / w[:, :, None]
        if math.sqrt(part.sum()) > tol * total:
            per = part.sum(axis=2)
            order = np.argsort(per, axis=None)[::-1][:5]
            modes = [tuple(int(v) + 1 for v in np.unravel_index(i, per.shape)) for i in order]
            err = DomainError(f"low modes not nulled before dissipation: {modes}")
            err.modes = modes
            raise err
    return free_evolution(u, duration)


@dataclass
class LRReport:
    rows: list
    norm_trajectory: list
    total_control_norm: float
    final_ratio: float
    final_state: ModalState2D
    tail_bound: float
    fields: list


def run_lr(u0, schedule, omega, cond_cap=1e12, tol=1e-6, controls=True, samples=None, ny=33,
           taper=None, K_x=None):
    """Alternate control steps and dissipation along the schedule.

    Rows hold (a_k, gamma_k, norm before, after control, after dissipation,
    step control norm).  On a step failure the exception carries the rows
    completed so far under diagnostics["partial"].
    """
    u = u0
    n0 = norm_hm1_2d(u0)
    rows, traj, fields = [], [n0], []
    sq = 0.0
    for (a, Tk), gamma in zip(schedule.intervals, schedule.cutoffs):
        before = norm_hm1_2d(u)
        if controls:
            try:
                st = control_step(u, a, Tk, gamma, omega, cond_cap, tol, taper, K_x, samples, ny)
                u_c = st.state
                # the step residual is relative to the norm before control
                slack = 2 * st.projected_residual * st.norm_before / max(st.norm_after, 1e-300)
                u = dissipate(u_c, Tk, gamma, tol=max(tol, slack))
            except (ConditioningError, ControllabilityError, NumericalError) as exc:
                exc.diagnostics["partial"] = rows
                raise
            qn = st.control_norm
            if st.field is not None:
                fields.append(st.field)
        else:
            u_c = free_evolution(u, Tk)
            u = free_evolution(u_c, Tk)
            qn = 0.0
        sq += qn ** 2
        after_c = norm_hm1_2d(u_c)
        after_d = norm_hm1_2d(u)
        rows.append((a, gamma, before, after_c, after_d, qn))
        traj.append(after_d)
    rest = schedule.T - schedule.end_of_loop
    if rest > 0:
        u = free_evolution(u, rest)
    final = norm_hm1_2d(u)
    last_gamma = schedule.cutoffs[-1]
    mu_next = eigenvalues(u0.exps[1], last_gamma + 1)[-1]
    tail = math.exp(-mu_next * (schedule.intervals[-1][1] + max(rest, 0.0)))
    ratio = final / n0 if n0 > 0 else 0.0
    return LRReport(rows, traj, math.sqrt(sq), ratio, u, tail, fields)


# --- finite-volume oracle ------------------------------------------------

def _fd_basis(exp, K, M):
    """Eigenpairs of the graded-mesh operator and the projection of phi_1..K."""
    x, vol, idx, diag, off, _ = fd_discretization(exp, M)
    w = np.sqrt(vol[idx])
    d = diag / (w * w)
    e = off / (w[:-1] * w[1:])
    vals, vecs = eigh_tridiagonal(d, e)
    xs = x[idx]
    phi = np.zeros((len(idx), K))
    pos = xs > 0
    phi[pos] = eigenfunctions(exp, K, xs[pos]).T
    if not np.all(pos):
        # strong regime: phi_k(0) equals the observation trace
        phi[~pos] = spectrum_table(exp, K).obs_traces
    proj = vecs.T @ (w[:, None] * phi)
    return vals, proj


def fd_dissipation_oracle(u, duration, M=2000):
    """H^{-1} norms before and after free flow, from the finite-volume operator.

    The discrete operator is separable, so the flow and the dual norm are
    diagonal in the product of the two 1-d discrete eigenbases.
    """
    if int(M) < 200:
        raise DomainError("M must be >= 200")
    lx, px = _fd_basis(u.exps[0], u.K, int(M))
    ly, py = _fd_basis(u.exps[1], u.J, int(M))
    W = lx[:, None] + ly[None, :]
    E = expm(u.sys.A * duration)
    hats = [px @ u.coeffs[:, :, r] @ py.T for r in range(u.sys.n)]
    decay = np.exp(-W * duration)
    after = [decay * sum(E[r, s] * hats[s] for s in range(u.sys.n)) for r in range(u.sys.n)]
    nb = math.sqrt(sum(float(np.sum(np.abs(h) ** 2 / W)) for h in hats))
    na = math.sqrt(sum(float(np.sum(np.abs(h) ** 2 / W)) for h in after))
    return nb, na
