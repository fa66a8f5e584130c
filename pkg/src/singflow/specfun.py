r"""
Special functions used by the kernel, the oscillator basis and the propagators.

Everything here works on real arguments and broadcasts over numpy arrays.
Scalars in give Python floats out.

* :func:`gamma`, :func:`lgamma` -- Lanczos approximation (g=7, 9 terms).
* :func:`bessel_j` -- :math:`J_\nu(x)` for real order :math:`\nu>-1`, ``x >= 0``.
  Maclaurin series for small ``x``; Miller backward recurrence normalised by
  the Neumann sum :math:`(x/2)^f = \sum_k (f+2k)\,\Gamma(f+k)/k!\,J_{f+2k}(x)`
  otherwise.
* :func:`bessel_j_oracle` -- slow extended-precision Maclaurin sum, for tests.
* :func:`laguerre`, :func:`legendre_p`, :func:`gegenbauer` -- three-term
  recurrences.
* :func:`kummer_m` -- confluent hypergeometric series :math:`M(c, b, t)`.
"""

import math
from decimal import Decimal, localcontext
from fractions import Fraction

import numpy as np

from .errors import ConvergenceError, DomainError, OracleUnavailable

__all__ = [
    "gamma",
    "lgamma",
    "binom",
    "bessel_j",
    "bessel_j_ladder",
    "bessel_j_bound",
    "bessel_asymptotic_constant",
    "bessel_j_oracle",
    "laguerre",
    "laguerre_table",
    "legendre_p",
    "legendre_table",
    "gegenbauer",
    "kummer_m",
    "X_SWITCH",
]

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
_SQRT_2PI = math.sqrt(2.0 * math.pi)

# Below this argument the Maclaurin series is summed directly.  The series
# cancels like I_nu(x)/|J_nu(x)|, which stays under ~5e2 here.
X_SWITCH = 8.0


def _scalar_out(value, *inputs):
    if all(np.ndim(a) == 0 for a in inputs):
        return float(value) if np.ndim(value) == 0 else float(np.asarray(value).ravel()[0])
    return value


def _lanczos_sum(z):
    # z = x - 1 for x >= 0.5
    acc = np.full_like(z, _LANCZOS[0])
    for i in range(1, 9):
        acc = acc + _LANCZOS[i] / (z + i)
    return acc


def gamma(x):
    """Gamma function for positive real arguments.

    Raises
    ------
    DomainError
        If any ``x <= 0``.
    """
    xa = np.asarray(x, dtype=float)
    if np.any(~(xa > 0)):
        raise DomainError("gamma is only defined here for x > 0")
    out = np.empty_like(xa)
    small = xa < 0.5
    big = ~small
    if np.any(big):
        z = xa[big] - 1.0
        t = z + _LANCZOS_G + 0.5
        # t**(z+0.5) split in two halves so large z does not overflow early
        half = t ** ((z + 0.5) / 2.0)
        out[big] = _SQRT_2PI * half * (half * np.exp(-t)) * _lanczos_sum(z)
    if np.any(small):
        # reflection: Gamma(x) Gamma(1-x) = pi / sin(pi x)
        xs = xa[small]
        z = -xs
        t = z + _LANCZOS_G + 0.5
        half = t ** ((z + 0.5) / 2.0)
        g1mx = _SQRT_2PI * half * (half * np.exp(-t)) * _lanczos_sum(z)
        out[small] = np.pi / (np.sin(np.pi * xs) * g1mx)
    return _scalar_out(out, x)


def lgamma(x):
    """Natural log of the Gamma function for ``x > 0``."""
    xa = np.asarray(x, dtype=float)
    if np.any(~(xa > 0)):
        raise DomainError("lgamma is only defined here for x > 0")
    shift = np.where(xa < 0.5, 1.0, 0.0)
    z = xa + shift - 1.0
    t = z + _LANCZOS_G + 0.5
    out = (z + 0.5) * np.log(t) - t + np.log(_SQRT_2PI * _lanczos_sum(z))
    out = out - shift * np.log(xa)
    return _scalar_out(out, x)


def binom(a, k):
    r"""Binomial coefficient :math:`\binom{a}{k}` with real upper argument.

    Evaluated through Gamma ratios; requires ``a - k > -1``.
    """
    a = np.asarray(a, dtype=float)
    k = np.asarray(k, dtype=float)
    out = np.exp(lgamma(a + 1.0) - lgamma(k + 1.0) - lgamma(a - k + 1.0))
    return _scalar_out(out, a, k)


# ----------------------------------------------------------------------------
# Bessel functions of the first kind
# ----------------------------------------------------------------------------


def _series_prefactor(nu, x):
    """(x/2)^nu / Gamma(nu+1), with the x == 0 limits filled in."""
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = (0.5 * x) ** nu / gamma(np.minimum(nu + 1.0, 150.0))
        logged = np.exp(nu * np.log(0.5 * x) - lgamma(nu + 1.0))
    pre = np.where(nu + 1.0 < 150.0, direct, logged)
    zero = x == 0.0
    if np.any(zero):
        pre = np.where(zero & (nu == 0.0), 1.0, pre)
        pre = np.where(zero & (nu > 0.0), 0.0, pre)
        pre = np.where(zero & (nu < 0.0), np.inf, pre)
    return pre


def _bessel_series(nu, x):
    q = 0.25 * x * x
    term = np.ones_like(x)
    acc = np.ones_like(x)
    comp = np.zeros_like(x)
    for k in range(1, 200):
        term = term * (-q) / (k * (nu + k))
        # Kahan step keeps the fixed-order sum reproducible to the last bit
        y = term - comp
        s = acc + y
        comp = (s - acc) - y
        acc = s
        if np.all(np.abs(term) <= 1e-17 * np.abs(acc)):
            break
    return _series_prefactor(nu, x) * acc


def _miller_start(nu_max, x_max):
    top = max(float(nu_max), float(x_max))
    m = int(math.ceil(top + 25.0 + 6.0 * math.sqrt(top)))
    return m + (m % 2)


def _miller(frac, x, n_lo, n_hi, start):
    """Backward recurrence along the ladder ``frac + n``.

    Returns an array of shape ``(n_hi - n_lo + 1,) + x.shape`` holding
    :math:`J_{frac+n}(x)` for ``n = n_lo .. n_hi``; ``n_lo`` may be -1.
    All inputs must have x > 0 and 0 <= frac < 1.
    """
    out = np.zeros((n_hi - n_lo + 1,) + x.shape)
    j_up = np.zeros_like(x)
    j = np.full_like(x, 1e-300)
    norm = np.zeros_like(x)
    kmax = start // 2
    # g_k = Gamma(frac+k) / (k! Gamma(frac+1)), walked downward in k
    g = np.exp(lgamma(frac + kmax) - lgamma(kmax + 1.0) - lgamma(frac + 1.0))
    stop = min(n_lo, 0)
    for idx in range(start, stop - 1, -1):
        if idx >= 0 and idx % 2 == 0:
            k = idx // 2
            if k == 0:
                norm = norm + j
            else:
                norm = norm + (frac + 2 * k) * g * j
                g = g * k / (frac + k - 1.0) if k > 1 else g
        if n_lo <= idx <= n_hi:
            out[idx - n_lo] = j
        if idx == stop:
            break
        j_down = 2.0 * (frac + idx) / x * j - j_up
        j_up, j = j, j_down
        big = np.abs(j) > 1e250
        if np.any(big):
            s = np.where(big, 1e-250, 1.0)
            j = j * s
            j_up = j_up * s
            norm = norm * s
            out = out * s
    scale = (0.5 * x) ** frac / (gamma(frac + 1.0) * norm)
    return out * scale


def bessel_j(nu, x):
    r"""Bessel function of the first kind :math:`J_\nu(x)`.

    Parameters
    ----------
    nu : float or array_like
        Real order, ``nu > -1``.
    x : float or array_like
        Non-negative argument; broadcast against ``nu``.

    Notes
    -----
    Absolute error is below 1e-13 over ``nu <= 60``, ``x <= 150`` in the
    test suite.  The backward recurrence never runs upward, so it stays
    stable on both sides of the turning point ``x = nu``.
    """
    nu_a = np.asarray(nu, dtype=float)
    x_a = np.asarray(x, dtype=float)
    if np.any(~(nu_a > -1.0)):
        raise DomainError("Bessel order must satisfy nu > -1")
    if np.any(~(x_a >= 0.0)):
        raise DomainError("bessel_j needs x >= 0")
    nu_b, x_b = np.broadcast_arrays(nu_a, x_a)
    out = np.empty(nu_b.shape)
    small = x_b <= X_SWITCH
    if np.any(small):
        out[small] = _bessel_series(nu_b[small], x_b[small])
    large = ~small
    if np.any(large):
        nl = nu_b[large]
        xl = x_b[large]
        n_int = np.floor(nl).astype(int)
        frac = nl - n_int
        start = _miller_start(nl.max(), xl.max())
        vals = np.empty_like(xl)
        # one backward sweep per distinct integer part keeps the ladders short
        for n in np.unique(n_int):
            sel = n_int == n
            f = frac[sel]
            vals[sel] = _miller(f, xl[sel], n, n, start)[0]
        out[large] = vals
    return _scalar_out(out, nu, x)


def bessel_j_ladder(frac, n_max, x):
    r"""All of :math:`J_{f+n}(x)` for ``n = 0 .. n_max`` in one sweep.

    Used by the kernel series, where whole ladders of orders that share a
    fractional part are needed at the same arguments.

    Returns
    -------
    ndarray, shape ``(n_max + 1,) + x.shape``
    """
    if not (0.0 <= frac < 1.0):
        raise DomainError("ladder fractional part must lie in [0, 1)")
    x_a = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(x_a < 0):
        raise DomainError("bessel_j_ladder needs x >= 0")
    out = np.empty((n_max + 1,) + x_a.shape)
    small = x_a <= X_SWITCH
    if np.any(small):
        xs = x_a[small]
        orders = frac + np.arange(n_max + 1, dtype=float)
        out[:, small] = _bessel_series(orders[:, None], np.broadcast_to(xs, (n_max + 1,) + xs.shape).copy())
    large = ~small
    if np.any(large):
        xl = x_a[large]
        start = _miller_start(frac + n_max, xl.max())
        fr = np.full_like(xl, frac)
        out[:, large] = _miller(fr, xl, 0, n_max, start)
    return out


def bessel_j_bound(nu, x):
    r"""Upper bound :math:`(x/2)^\nu/\Gamma(\nu+1) \ge |J_\nu(x)|` for :math:`\nu \ge -1/2`."""
    nu_a = np.asarray(nu, dtype=float)
    x_a = np.asarray(x, dtype=float)
    return _scalar_out(_series_prefactor(*np.broadcast_arrays(nu_a, x_a)), nu, x)


def bessel_asymptotic_constant(sigma, z_max=200.0, n=4000):
    r"""Empirical constant :math:`C_\sigma` in the large-argument remainder bound

    .. math::

        \Big|J_\sigma(z) - \sqrt{2/(\pi z)}\cos(z - \sigma\pi/2 - \pi/4)\Big|
        \le \frac{C_\sigma}{z^{1/2}(1+z)},

    taken as the largest scaled remainder on a grid of ``n`` points in
    ``(0, z_max]``.  A lower estimate of the true constant by construction.
    """
    if sigma < 0:
        raise DomainError("order must be >= 0")
    z = np.geomspace(1e-6, 1.0, n // 4)[:-1]
    z = np.concatenate([z, np.linspace(1.0, z_max, n - z.size)])
    lead = np.sqrt(2.0 / (math.pi * z)) * np.cos(z - 0.5 * sigma * math.pi - 0.25 * math.pi)
    xi = bessel_j(np.full_like(z, float(sigma)), z) - lead
    return float(np.max(np.abs(xi) * np.sqrt(z) * (1.0 + z)))


def bessel_j_oracle(nu, x, terms=200):
    """Reference :math:`J_\\nu(x)` from an extended-precision Maclaurin sum.

    The alternating series is summed in :class:`decimal.Decimal` with enough
    digits to absorb the cancellation, so the result is correct to ~1e-15
    relative.  Slow; meant for tests only.

    Raises
    ------
    OracleUnavailable
        If the double-precision prefactor over/underflows or the series has
        not converged within ``terms`` terms.
    """
    if x < 0 or x > 30:
        raise DomainError("oracle is restricted to 0 <= x <= 30")
    if terms < 100:
        raise DomainError("oracle needs at least 100 terms")
    if not nu > -1:
        raise DomainError("oracle needs nu > -1")
    if x == 0:
        return 1.0 if nu == 0 else 0.0
    try:
        pre = math.exp(nu * math.log(x / 2.0) - math.lgamma(nu + 1.0))
    except OverflowError as exc:
        raise OracleUnavailable("prefactor overflows") from exc
    if pre == 0.0 or not math.isfinite(pre):
        raise OracleUnavailable("prefactor under/overflows in double precision")
    with localcontext() as ctx:
        ctx.prec = 60
        q = Decimal(x) * Decimal(x) / 4
        dnu = Decimal(nu)
        term = Decimal(1)
        acc = Decimal(1)
        tiny = Decimal(10) ** -40
        for k in range(1, terms + 1):
            term = term * (-q) / (k * (dnu + k))
            acc += term
            if abs(term) < tiny * abs(acc) and k > q.sqrt():
                break
        else:
            raise OracleUnavailable("series not converged within %d terms" % terms)
        return pre * float(acc)


# ----------------------------------------------------------------------------
# Orthogonal polynomials
# ----------------------------------------------------------------------------


def laguerre_table(m_max, alpha, t):
    r"""Generalised Laguerre :math:`L_m^\alpha(t)` for ``m = 0 .. m_max``.

    Returns an array of shape ``(m_max + 1,) + broadcast(alpha, t).shape``.
    """
    alpha = np.asarray(alpha, dtype=float)
    t = np.asarray(t, dtype=float)
    a, tt = np.broadcast_arrays(alpha, t)
    out = np.empty((m_max + 1,) + a.shape)
    out[0] = 1.0
    if m_max >= 1:
        out[1] = 1.0 + a - tt
    for m in range(1, m_max):
        out[m + 1] = ((2 * m + 1 + a - tt) * out[m] - (m + a) * out[m - 1]) / (m + 1)
    return out


def laguerre(m, alpha, t):
    """Generalised Laguerre polynomial by the three-term recurrence."""
    if m < 0:
        raise DomainError("Laguerre degree must be >= 0")
    if np.any(np.asarray(alpha) <= -1):
        raise DomainError("Laguerre parameter must satisfy alpha > -1")
    return _scalar_out(laguerre_table(m, alpha, t)[m], alpha, t)


def legendre_table(l_max, t):
    """Legendre :math:`P_l(t)` for ``l = 0 .. l_max`` (Bonnet recurrence)."""
    t = np.asarray(t, dtype=float)
    out = np.empty((l_max + 1,) + t.shape)
    out[0] = 1.0
    if l_max >= 1:
        out[1] = t
    for l in range(1, l_max):
        out[l + 1] = ((2 * l + 1) * t * out[l] - l * out[l - 1]) / (l + 1)
    return out


def legendre_p(l, t):
    """Legendre polynomial :math:`P_l(t)` on ``[-1, 1]``."""
    if l < 0:
        raise DomainError("Legendre degree must be >= 0")
    if np.any(np.abs(np.asarray(t)) > 1.0 + 1e-12):
        raise DomainError("legendre_p needs |t| <= 1")
    return _scalar_out(legendre_table(l, t)[l], t)


def gegenbauer(l, lam, t):
    r"""Gegenbauer polynomial :math:`C_l^{\lambda}(t)`, ``lam > 0``.

    The zonal harmonics on :math:`S^{N-1}` are proportional to
    :math:`C_l^{(N-2)/2}`; for ``lam == 0.5`` this is :math:`P_l`.
    """
    t = np.asarray(t, dtype=float)
    c_prev = np.ones_like(t)
    if l == 0:
        return _scalar_out(c_prev, t)
    c = 2.0 * lam * t
    for n in range(1, l):
        c, c_prev = (2.0 * (n + lam) * t * c - (n + 2.0 * lam - 1.0) * c_prev) / (n + 1), c
    return _scalar_out(c, t)


def _kummer_exact(m, b, t):
    # every term of the terminating series is rational in (b, t); summing
    # them exactly avoids the cancellation of the alternating series
    bq = Fraction(float(b))
    out = np.empty(t.shape)
    for idx, tv in np.ndenumerate(t):
        tq = Fraction(float(tv))
        term = Fraction(1)
        acc = Fraction(1)
        for n in range(m):
            term = term * (n - m) / (bq + n) * tq / (n + 1)
            acc += term
        out[idx] = float(acc)
    return out


def kummer_m(c, b, t, max_terms=2000):
    r"""Kummer confluent hypergeometric function :math:`M(c, b, t)`.

    For ``c = -m`` (non-positive integer) the series stops after ``m + 1``
    terms; these are summed in exact rational arithmetic, so the polynomial
    value is correctly rounded however much the terms cancel.  Otherwise the
    series is summed in floating point until the terms drop below 1e-17 of
    the running sum.

    Raises
    ------
    DomainError
        If ``b`` is a non-positive integer.
    ConvergenceError
        If a non-polynomial series has not settled within ``max_terms``, or
        cancellation would leave fewer than ~8 significant digits.
    """
    if b <= 0 and float(b).is_integer():
        raise DomainError("M(c, b, t) is undefined for non-positive integer b")
    t = np.asarray(t, dtype=float)
    polynomial = c <= 0 and float(c).is_integer()
    if polynomial:
        return _scalar_out(_kummer_exact(int(-c), b, t), t)
    term = np.ones_like(t)
    acc = np.ones_like(t)
    peak = np.ones_like(t)
    for n in range(max_terms):
        term = term * (c + n) / (b + n) * t / (n + 1)
        acc = acc + term
        peak = np.maximum(peak, np.abs(term))
        if np.all(np.abs(term) <= 1e-17 * np.abs(acc)):
            break
    else:
        raise ConvergenceError("Kummer series did not converge in %d terms" % max_terms)
    if np.any(peak > 1e8 * np.abs(acc)):
        raise ConvergenceError("Kummer series lost too many digits to cancellation")
    return _scalar_out(acc, t)
