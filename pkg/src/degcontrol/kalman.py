"""Coupled systems, Kalman rank tests and rearrangement of the spectrum.

The coupled operator applies the degenerate diffusion -(x^alpha u')' to every
component and adds the constant coupling A.  Mode k of the diffusion gives the
finite block L_k = A - lambda_k I, and the truncated system up to mode k is
(bold L_k, bold B_k) = (diag(L_1..L_k), [B; ...; B]).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DomainError, NumericalError
from .spectrum import counting_function, eigenvalues

CLUSTER_TOL = 1e-8


@dataclass
class CoupledSystem:
    n: int
    m: int
    A: np.ndarray
    B: np.ndarray
    mu_shift: float = 0.0

    @property
    def A_shifted(self):
        return self.A - self.mu_shift * np.eye(self.n)


def make_system(A, B, mu_shift=None):
    """Validate (A, B) and pick a stabilising shift if none is given.

    The default shift is the smallest non-negative number s with
    max Re eig(A - sI) <= -1.
    """
    A = np.atleast_2d(np.asarray(A, dtype=complex))
    B = np.asarray(B, dtype=complex)
    if B.ndim == 1:
        B = B.reshape(-1, 1)
    n = A.shape[0]
    if A.shape != (n, n):
        raise DomainError(f"A must be square, got shape {A.shape}")
    if B.ndim != 2 or B.shape[0] != n:
        raise DomainError(f"B must have {n} rows, got shape {B.shape}")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
        raise DomainError("A and B must be finite")
    top = float(np.max(np.linalg.eigvals(A).real))
    if mu_shift is None:
        mu_shift = max(0.0, top + 1.0)
    mu_shift = float(mu_shift)
    if mu_shift < 0:
        raise DomainError("mu_shift must be >= 0")
    if top - mu_shift >= 0:
        raise DomainError(f"mu_shift={mu_shift} does not make A - mu I stable")
    return CoupledSystem(n, B.shape[1], A, B, mu_shift)


def build_blocks(sys, exp, k):
    """Block matrices (L_k, B_k) of size nk x nk and nk x m."""
    k = int(k)
    if k < 1:
        raise DomainError("k must be >= 1")
    lam = eigenvalues(exp, k)
    n = sys.n
    L = np.zeros((n * k, n * k), dtype=complex)
    for j in range(k):
        L[j * n:(j + 1) * n, j * n:(j + 1) * n] = sys.A - lam[j] * np.eye(n)
    Bk = np.vstack([sys.B] * k)
    return L, Bk


def kalman_rank(Lk, Bk, tol=1e-9):
    """Dimension of span[B, LB, ..., L^{N-1}B].

    The Krylov columns are generated block by block: each new block is
    rescaled, orthogonalised twice against the basis found so far, and its
    singular values above tol (relative to the rescaled block) count as new
    directions.  The raw Kalman matrix loses rank numerically long before
    this does, because powers of L separate the columns by many orders of
    magnitude.
    """
    if not tol > 0:
        raise DomainError("tol must be > 0")
    L = np.asarray(Lk, dtype=complex)
    V = np.asarray(Bk, dtype=complex)
    if V.ndim == 1:
        V = V.reshape(-1, 1)
    N = L.shape[0]
    scale = np.max(np.abs(L))
    if scale > 0:
        L = L / scale
    Q = np.zeros((N, 0), dtype=complex)
    for _ in range(N):
        top = np.max(np.linalg.norm(V, axis=0)) if V.size else 0.0
        if top == 0.0:
            break
        if not np.isfinite(top):
            raise NumericalError("non-finite Krylov block")
        V = V / top
        for _ in range(2):
            V = V - Q @ (Q.conj().T @ V)
        U, s, _ = np.linalg.svd(V, full_matrices=False)
        r = int(np.sum(s > tol))
        if r == 0:
            break
        Qn = U[:, :r]
        Q = np.hstack([Q, Qn])
        if Q.shape[1] >= N:
            break
        V = L @ Qn
    return Q.shape[1]


def eigen_structure(M, cluster_tol=CLUSTER_TOL):
    """Distinct eigenvalues of M with multiplicities and chain lengths.

    Returns a list of dicts with keys value, algebraic, geometric, chain.
    Eigenvalues closer than cluster_tol (relative to max(1, |mu|)) are merged,
    and chain is the nilpotency index of M - mu on its generalised eigenspace,
    i.e. the longest Jordan chain.
    """
    M = np.asarray(M, dtype=complex)
    n = M.shape[0]
    ev = np.linalg.eigvals(M)
    order = np.lexsort((ev.imag, ev.real))
    scale = max(1.0, np.linalg.norm(M, 2))
    # a Jordan chain of length a splits its eigenvalue by about eps^(1/a),
    # so the merge radius cannot be smaller than the n-th root of eps
    radius = max(cluster_tol, 10.0 * (np.finfo(float).eps * scale) ** (1.0 / n)) if n > 1 else cluster_tol
    clusters = []
    for v in ev[order]:
        for c in clusters:
            if abs(v - np.mean(c)) <= radius * max(1.0, abs(v)):
                c.append(v)
                break
        else:
            clusters.append([v])
    out = []
    for c in clusters:
        mu = complex(np.mean(c))
        a = len(c)
        N = M - mu * np.eye(n)
        tol = 1e-7 * scale
        geo = n - np.linalg.matrix_rank(N, tol=tol)
        chain = a
        P = np.eye(n, dtype=complex)
        for s in range(1, a + 1):
            P = P @ N
            if np.linalg.matrix_rank(P, tol=tol * scale ** (s - 1)) == n - a:
                chain = s
                break
        out.append({"value": mu, "algebraic": a, "geometric": int(geo), "chain": int(chain)})
    return out


def _hautus_ok(sys, exp, k, tol):
    lam = eigenvalues(exp, k)
    n = sys.n
    mus = [e["value"] for e in eigen_structure(sys.A)]
    for j in range(k):
        for mu in mus:
            target = mu - lam[j]
            # blocks whose spectrum contains target
            blocks = [i for i in range(k) for nu in mus
                      if abs(nu - lam[i] - target) <= 1e-9 * max(1.0, abs(target))]
            blocks = sorted(set(blocks))
            if blocks[0] != j:
                continue
            rows = []
            for i in blocks:
                Li = sys.A - (lam[i] + target) * np.eye(n)
                row = np.zeros((n, n * len(blocks)), dtype=complex)
                p = blocks.index(i)
                row[:, p * n:(p + 1) * n] = Li
                rows.append(np.hstack([row, sys.B]))
            H = np.vstack(rows)
            s = np.linalg.svd(H, compute_uv=False)
            if s[0] == 0 or int(np.sum(s > tol * s[0])) < n * len(blocks):
                return False
    return True


@dataclass
class ControllabilityVerdict:
    per_k: list
    ranks: list
    expected: list
    overall: bool
    first_failure: int | None
    K_max: int
    note: str = field(default="")


def check_controllability(sys, exp, K_max=64, tol=1e-9):
    """Kalman rank test for k = 1..K_max, cross-checked with the Hautus test.

    The condition concerns every k >= 1; only k <= K_max is checked and the
    verdict says so in its note.
    """
    K_max = int(K_max)
    if K_max < 1:
        raise DomainError("K_max must be >= 1")
    per_k, ranks, expected = [], [], []
    for k in range(1, K_max + 1):
        L, Bk = build_blocks(sys, exp, k)
        r = kalman_rank(L, Bk, tol)
        ok = r == sys.n * k
        h = _hautus_ok(sys, exp, k, tol)
        if h != ok:
            raise NumericalError("Kalman and Hautus tests disagree", k=k, rank=r,
                                 expected=sys.n * k, hautus=h)
        per_k.append(ok)
        ranks.append(r)
        expected.append(sys.n * k)
    fails = [k + 1 for k, ok in enumerate(per_k) if not ok]
    return ControllabilityVerdict(per_k, ranks, expected, not fails,
                                  fails[0] if fails else None, K_max,
                                  f"rank condition checked for k <= {K_max} only")


@dataclass
class RearrangedSpectrum:
    K0: int
    p_tilde: int
    gammas: np.ndarray
    gamma_chains: list
    mus: np.ndarray
    chains: list
    lambdas: np.ndarray
    eta: int

    @property
    def p(self):
        return len(self.mus)

    def tail(self, i):
        """Lambda_{p_tilde + i} for i >= 1."""
        j = (i - 1) // self.p + 1
        l = i - (i - 1) // self.p * self.p
        return self.lambdas[self.K0 + j - 1] - self.mus[l - 1]

    def tail_chain(self, i):
        l = i - (i - 1) // self.p * self.p
        return self.chains[l - 1]

    def sequence(self, N):
        """First N terms Lambda_1..Lambda_N and their chain lengths."""
        N = int(N)
        vals, ch = [], []
        for ell in range(min(N, self.p_tilde)):
            vals.append(-self.gammas[ell])
            ch.append(self.gamma_chains[ell])
        i = 1
        while len(vals) < N:
            if self.K0 + (i - 1) // self.p >= len(self.lambdas):
                raise ConfigurationError("sequence longer than the available eigenvalues")
            vals.append(self.tail(i))
            ch.append(self.tail_chain(i))
            i += 1
        return np.array(vals, dtype=complex), ch


def _arrange_mus(struct):
    # Re descending, then modulus descending on ties
    return sorted(struct, key=lambda e: (-round(e["value"].real, 12), -abs(e["value"])))


def rearrange(sys, exp, K_max=64):
    """Rearranged eigenvalues Lambda of the adjoint coupled operator.

    Uses the shifted matrix A - mu_shift I.  K0 is the smallest index such
    that for every k in [K0, K_max - 1] the values lambda_k - mu_l are
    isolated from all others, ordered in l by modulus, and dominated by the
    values of the next mode.
    """
    K_max = int(K_max)
    if K_max < 2:
        raise DomainError("K_max must be >= 2")
    struct = _arrange_mus(eigen_structure(sys.A_shifted.conj().T))
    mus = np.array([e["value"] for e in struct])
    chains = [e["chain"] for e in struct]
    p = len(mus)
    lam = eigenvalues(exp, K_max + 1)
    Lam = lam[:, None] - mus[None, :]
    flat = Lam.ravel()
    scale = max(1.0, float(np.max(np.abs(flat))))

    def good(k):
        # k is 0-based
        row = Lam[k]
        for i in range(p):
            d = np.abs(flat - row[i])
            d[k * p + i] = np.inf
            if np.min(d) <= 1e-9 * scale:
                return False
        for l in range(p - 1):
            if abs(row[l]) > abs(row[l + 1]) * (1 + 1e-14):
                return False
        if np.max(np.abs(row)) > np.min(np.abs(Lam[k + 1])) * (1 + 1e-14):
            return False
        return True

    K0 = None
    for k in range(K_max - 1, -1, -1):
        if good(k):
            K0 = k + 1
        else:
            break
    if K0 is None:
        raise ConfigurationError(f"no valid K0 <= {K_max}; increase K_max")
    low = []
    for k in range(K0):
        for l in range(p):
            low.append((-lam[k] + mus[l], chains[l]))
    # merge coinciding low values, keeping the longest chain
    gam, gch = [], []
    for v, c in sorted(low, key=lambda t: abs(t[0])):
        for q, g in enumerate(gam):
            if abs(g - v) <= 1e-9 * scale:
                gch[q] = max(gch[q], c)
                break
        else:
            gam.append(v)
            gch.append(c)
    order = np.argsort(np.abs(gam), kind="stable")
    gam = np.array(gam)[order]
    gch = [gch[i] for i in order]
    return RearrangedSpectrum(K0, len(gam), gam, gch, mus, chains, lam,
                              max(chains + gch))


@dataclass
class HypothesisReport:
    conditions: dict
    ok: bool


def verify_hypotheses(spec, K_max):
    """Numerical check of the hypotheses i-vii on Lambda_1..Lambda_{K_max}."""
    N = int(K_max)
    vals, _ = spec.sequence(N)
    mod = np.abs(vals)
    res = {}
    d = np.abs(vals[:, None] - vals[None, :])
    np.fill_diagonal(d, np.inf)
    min_sep = float(np.min(d))
    res["i_distinct"] = {"ok": min_sep > 1e-9 * max(1.0, float(np.max(mod))), "min_separation": min_sep}
    min_re = float(np.min(vals.real))
    res["ii_positive_real"] = {"ok": min_re > 0, "min_real": min_re}
    with np.errstate(divide="ignore", invalid="ignore"):
        beta = float(np.max(np.abs(vals.imag) / np.sqrt(np.maximum(vals.real, 1e-300))))
    res["iii_sector"] = {"ok": math.isfinite(beta), "beta": beta}
    steps = np.diff(mod)
    res["iv_monotone"] = {"ok": bool(np.all(steps >= -1e-12 * mod[1:])),
                          "worst_step": float(np.min(steps)) if len(steps) else 0.0}
    q = max(spec.p, 1)
    ks = np.arange(1, N + 1, dtype=float)
    kk = np.abs(ks[:, None] ** 2 - ks[None, :] ** 2)
    far = np.abs(ks[:, None] - ks[None, :]) >= q
    rho = float(np.min(d[far] / kk[far])) if np.any(far) else float("inf")
    near = (~far) & np.isfinite(d)
    near_inf = float(np.min(d[near])) if np.any(near) else float("inf")
    res["v_gap"] = {"ok": rho > 0 and near_inf > 0, "rho": rho, "q": q, "near_infimum": near_inf}
    # counting function against sqrt(r) on r in [|Lambda_1|, |Lambda_N|)
    rs = np.concatenate([mod[:-1], 0.5 * (mod[:-1] + mod[1:])])
    counts = np.array([counting_function(mod, r) for r in rs])
    w = float(spec.p_tilde + spec.p)
    p1 = float(np.min((counts + w) / np.sqrt(rs)))
    p2 = float(np.max((counts - w) / np.sqrt(rs)))
    p2 = max(p2, p1)
    res["vii_counting"] = {"ok": p1 > 0 and math.isfinite(p2), "p1": p1, "p2": p2, "varpi": w}
    hard = all(res[c]["ok"] for c in ("i_distinct", "ii_positive_real", "iv_monotone"))
    ok = hard and all(r["ok"] for r in res.values())
    return HypothesisReport(res, ok)
