"""Gamma function, Bessel functions J_nu of real order nu >= 0 and their zeros.

J_nu is evaluated from its power series for x <= 12 and from the Hankel
large-argument expansion beyond.  Zeros are located by scanning from a
lower bound, refined by bisection and polished with Newton steps.
"""

import math
import numpy as np

from .errors import DomainError, NumericalError

CROSSOVER = 12.0

# Lanczos coefficients, g = 7, n = 9
_LANCZOS_G = 7.0
_LANCZOS = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)


def gamma(x):
    """Gamma function for real x > 0 (Lanczos approximation)."""
    x = float(x)
    if not x > 0.0 or not math.isfinite(x):
        raise DomainError(f"gamma requires x > 0, got {x!r}")
    if x < 0.5:
        # reflection keeps the rational part on its accurate range
        return math.pi / (math.sin(math.pi * x) * gamma(1.0 - x))
    if x > 171.6:
        raise DomainError(f"gamma({x}) overflows double precision")
    z = x - 1.0
    s = _LANCZOS[0]
    for i in range(1, len(_LANCZOS)):
        s += _LANCZOS[i] / (z + i)
    t = z + _LANCZOS_G + 0.5
    # split the power to avoid overflow near the top of the range
    half = t ** ((z + 0.5) / 2.0)
    return math.sqrt(2.0 * math.pi) * half * (half * math.exp(-t)) * s


def _check_order(nu):
    nu = float(nu)
    if not nu >= 0.0 or not math.isfinite(nu):
        raise DomainError(f"Bessel order must be finite and >= 0, got {nu!r}")
    return nu


def _series(nu, x):
    # sum (-1)^k (x/2)^(2k+nu) / (k! Gamma(k+nu+1)), term ratio test at 1e-18
    h = 0.5 * x
    h2 = h * h
    with np.errstate(divide="ignore", invalid="ignore"):
        if nu == 0.0:
            term = np.ones_like(x)
        else:
            term = np.power(h, nu) / gamma(nu + 1.0)
    total = term.copy()
    k = 0
    while True:
        k += 1
        term = -term * h2 / (k * (k + nu))
        total += term
        scale = np.maximum(np.abs(total), 1e-300)
        if np.all(np.abs(term) <= 1e-18 * scale) or k > 200:
            break
    return total


def _hankel_terms(nu, x):
    """Return P, Q of the Hankel expansion; x must be > CROSSOVER."""
    mu = 4.0 * nu * nu
    P = np.ones_like(x)
    Q = np.zeros_like(x)
    term = np.ones_like(x)
    prev = np.full_like(x, np.inf)
    active = np.ones(x.shape, dtype=bool)
    for k in range(1, 60):
        term = term * (mu - (2 * k - 1) ** 2) / (8.0 * k * x)
        mag = np.abs(term)
        # stop each abscissa at the smallest term (optimal truncation),
        # but always keep at least eight corrections
        if k > 8:
            active &= mag < prev
        if not np.any(active):
            break
        contrib = np.where(active, term, 0.0)
        r = k % 4
        if r == 0:
            P += contrib
        elif r == 1:
            Q += contrib
        elif r == 2:
            P -= contrib
        else:
            Q -= contrib
        prev = np.where(active, mag, prev)
        if np.all(mag == 0.0):
            break
    return P, Q


def _hankel(nu, x):
    P, Q = _hankel_terms(nu, x)
    chi = x - (0.5 * nu + 0.25) * math.pi
    return np.sqrt(2.0 / (math.pi * x)) * (P * np.cos(chi) - Q * np.sin(chi))


def bessel_j(nu, x):
    """Bessel function of the first kind J_nu(x) for nu >= 0, x >= 0.

    Accepts scalars or arrays; returns the same shape.
    """
    nu = _check_order(nu)
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0) or not np.all(np.isfinite(xa)):
        raise DomainError("bessel_j requires finite x >= 0")
    flat = np.atleast_1d(xa).ravel()
    out = np.empty_like(flat)
    small = flat <= CROSSOVER
    if np.any(small):
        out[small] = _series(nu, flat[small])
    if np.any(~small):
        out[~small] = _hankel(nu, flat[~small])
    if xa.ndim == 0:
        return float(out[0])
    return out.reshape(xa.shape)


def bessel_j_series(nu, x):
    """Power series only; used to check the crossover."""
    nu = _check_order(nu)
    return float(_series(nu, np.atleast_1d(float(x)))[0])


def bessel_j_asymptotic(nu, x):
    """Hankel expansion only; meaningful for moderately large x."""
    nu = _check_order(nu)
    return float(_hankel(nu, np.atleast_1d(float(x)))[0])


def bessel_j_prime(nu, x):
    """Derivative of J_nu with respect to x, x > 0."""
    nu = _check_order(nu)
    xa = np.asarray(x, dtype=float)
    if np.any(xa <= 0):
        raise DomainError("bessel_j_prime requires x > 0")
    if nu >= 1.0:
        val = bessel_j(nu - 1.0, xa) - (nu / xa) * bessel_j(nu, xa)
    else:
        val = (nu / xa) * bessel_j(nu, xa) - bessel_j(nu + 1.0, xa)
    if np.ndim(val) == 0:
        return float(val)
    return val


def zero_bracket(nu, k):
    """Classical bracket (lower, upper) for the k-th positive zero.

    For nu in [0, 1/2] the zero lies in [(k + nu/2 - 1/4)pi, (k + nu/4 - 1/8)pi];
    for nu >= 1/2 the two expressions trade places.
    """
    nu = _check_order(nu)
    if k < 1:
        raise DomainError("zero index k must be >= 1")
    e1 = (k + nu / 2.0 - 0.25) * math.pi
    e2 = (k + nu / 4.0 - 0.125) * math.pi
    return (min(e1, e2), max(e1, e2))


def _refine(nu, lo, hi, flo):
    """Vectorised bisection to width 1e-4 followed by Newton polishing."""
    lo = lo.copy()
    hi = hi.copy()
    flo = flo.copy()
    while np.max(hi - lo) > 1e-4:
        mid = 0.5 * (lo + hi)
        fm = bessel_j(nu, mid)
        same = (fm > 0) == (flo > 0)
        lo = np.where(same, mid, lo)
        flo = np.where(same, fm, flo)
        hi = np.where(same, hi, mid)
    x = 0.5 * (lo + hi)
    for _ in range(50):
        step = bessel_j(nu, x) / bessel_j_prime(nu, x)
        x = x - step
        if np.all(np.abs(step) <= 1e-15 * x):
            break
    bad = (x < lo - 1e-4) | (x > hi + 1e-4) | ~np.isfinite(x)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise NumericalError("Newton iteration left the bisection bracket",
                             nu=nu, lo=float(lo[i]), hi=float(hi[i]), x=float(x[i]))
    return x


_ZERO_CACHE = {}


def _compute_zeros(nu, K):
    # J_nu has no zero below the lower bracket of the first root
    start = 0.95 * zero_bracket(nu, 1)[0]
    if nu > 0:
        start = max(start, nu)
    stop = 1.05 * zero_bracket(nu, K)[1] + 2.0
    # consecutive zeros are at least about 3 apart, so a unit step
    # isolates every root in its own cell
    while True:
        grid = np.arange(start, stop + 1.0, 1.0)
        f = bessel_j(nu, grid)
        change = np.nonzero(np.signbit(f[:-1]) != np.signbit(f[1:]))[0]
        if len(change) >= K:
            break
        stop *= 1.5
    change = change[:K]
    return _refine(nu, grid[change], grid[change + 1], f[change])


def bessel_zeros(nu, K):
    """First K positive zeros of J_nu as an array."""
    nu = _check_order(nu)
    K = int(K)
    if K < 1:
        raise DomainError("K must be >= 1")
    key = round(nu, 15)
    have = _ZERO_CACHE.get(key)
    if have is None or len(have) < K:
        have = _compute_zeros(nu, max(K, 64))
        _ZERO_CACHE[key] = have
    return have[:K].copy()


def bessel_zero(nu, k):
    """k-th positive zero j_{nu,k} of J_nu."""
    k = int(k)
    if k < 1:
        raise DomainError("zero index k must be >= 1")
    z = float(bessel_zeros(nu, k)[-1])
    lo, hi = zero_bracket(nu, k)
    pad = 0.05 * hi
    if not lo - pad <= z <= hi + pad:
        raise NumericalError("zero outside its padded bracket",
                             nu=nu, k=k, zero=z, bracket=(lo, hi))
    return z


def bessel_zeros_mp(nu, K, dps):
    """First K zeros of J_nu as mpmath numbers at dps decimal digits.

    The double-precision zeros are used as starting points for Newton
    iteration on mpmath.besselj.
    """
    import mpmath

    start = bessel_zeros(nu, K)
    with mpmath.workdps(dps):
        mnu = mpmath.mpf(nu)
        out = []
        for z0 in start:
            x = mpmath.mpf(z0)
            for _ in range(100):
                f = mpmath.besselj(mnu, x)
                d = mpmath.besselj(mnu, x, derivative=1)
                dx = f / d
                x -= dx
                if abs(dx) <= mpmath.mpf(10) ** (-dps + 2) * x:
                    break
            out.append(+x)
        return out
