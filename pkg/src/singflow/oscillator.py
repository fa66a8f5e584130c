r"""
Eigenbasis of the magnetic harmonic oscillator :math:`T = L + |x|^2/4`.

Modes are indexed by ``(m, k)`` with ``m >= 0`` the radial quantum number and
``k`` the angular index.  With :math:`t = r^2/2`,

.. math::

    V_{m,k}(x) = r^{-\alpha_k} e^{-t/2} P_{k,m}(t)\,\psi_k(\hat x), \qquad
    P_{k,m} = L_m^{\beta_k} / \binom{m+\beta_k}{m},

and :math:`T V_{m,k} = (2m + \beta_k + 1) V_{m,k}`.  All radial integrals go
through generalised Gauss-Laguerre rules in ``t``, which are exact for the
polynomial parts.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .quadrature import gauss_laguerre
from .specfun import binom, laguerre_table, lgamma

__all__ = ["OscillatorBasis", "Expansion", "MASS_FLOOR"]

MASS_FLOOR = 1.0 - 1e-6


@dataclass
class Expansion:
    """Oscillator coefficients of a datum.

    ``coeffs`` maps each channel label to its complex ``c_m`` (``m = 0 ..
    m_max``).  ``captured`` is :math:`\\sum|c|^2/\\|u_0\\|^2`; ``warning`` is
    set when it falls below the basis mass floor.
    """

    coeffs: dict
    captured: float
    norm2: float
    warning: str = None


class OscillatorBasis:
    """Normalised oscillator modes for an angular model.

    Parameters
    ----------
    model : AngularModel
    m_max : int
        Largest radial quantum number kept.
    k_max : int
        Number of angular channels available.
    n_quad : int, optional
        Gauss-Laguerre node count; defaults to ``max(64, m_max + 8)`` so
        that every mode product is integrated exactly.
    mass_floor : float
        Captured-mass fraction below which expansions carry a warning.
    """

    def __init__(self, model, m_max=64, k_max=32, n_quad=None, mass_floor=MASS_FLOOR):
        if m_max < 0 or k_max < 1:
            raise DomainError("need m_max >= 0 and k_max >= 1")
        self.model = model
        self.m_max = int(m_max)
        self.k_max = int(k_max)
        self.n_quad = int(n_quad or max(64, self.m_max + 8))
        self.mass_floor = mass_floor
        self.pairs = model.eigenpairs(self.k_max)
        ms = np.arange(self.m_max + 1)
        # log of the normalising factor sqrt(m! / (2^beta Gamma(m+beta+1)))
        self._log_norm = np.array(
            [0.5 * (lgamma(ms + 1.0) - p.beta * math.log(2.0) - lgamma(ms + p.beta + 1.0)) for p in self.pairs]
        )
        self._log_norm.setflags(write=False)

    def __repr__(self):
        return "OscillatorBasis(%r, m_max=%d, k_max=%d)" % (self.model, self.m_max, self.k_max)

    def _pair(self, k):
        if not 1 <= k <= self.k_max:
            raise DomainError("angular index k=%d outside 1..%d" % (k, self.k_max))
        return self.pairs[k - 1]

    def pair_for(self, label):
        pair = self.model.pair_for(label)
        if pair.k > self.k_max:
            raise DomainError("channel %r (k=%d) lies outside the basis k_max=%d" % (label, pair.k, self.k_max))
        return pair

    # spectrum -----------------------------------------------------------

    def eigenvalue(self, m, k):
        """:math:`\\gamma_{m,k} = 2m - \\alpha_k + N/2`."""
        if m < 0:
            raise DomainError("m must be >= 0")
        p = self._pair(k)
        return 2.0 * m - p.alpha + 0.5 * self.model.dim

    def spectrum(self, gamma_max):
        """Sorted ``(gamma, m, k)`` for every mode with ``gamma <= gamma_max``."""
        out = []
        for p in self.pairs:
            for m in range(self.m_max + 1):
                g = self.eigenvalue(m, p.k)
                if g > gamma_max:
                    break
                out.append((g, m, p.k))
        return sorted(out)

    def norm2(self, m, k):
        r""":math:`\|V_{m,k}\|^2 = 2^{\beta} \Gamma(1+\beta) / \binom{m+\beta}{m}`."""
        b = self._pair(k).beta
        return 2.0**b * math.gamma(1.0 + b) / binom(m + b, m)

    # radial functions ---------------------------------------------------

    def eigenfunction_radial(self, m, k, r):
        """Unnormalised radial factor ``r^{-alpha} e^{-r^2/4} P_{k,m}(r^2/2)``."""
        p = self._pair(k)
        r = np.asarray(r, dtype=float)
        if np.any(r <= 0):
            raise DomainError("radial eigenfunctions need r > 0")
        t = 0.5 * r * r
        lag = laguerre_table(m, p.beta, np.atleast_1d(t))[m].reshape(t.shape)
        val = r ** (-p.alpha) * np.exp(-0.5 * t) * lag / binom(m + p.beta, m)
        return float(val) if val.ndim == 0 else val

    def radial(self, k, r, m_max=None):
        """Normalised radial factors for ``m = 0 .. m_max`` (rows) at radii ``r``."""
        p = self._pair(k)
        mm = self.m_max if m_max is None else int(m_max)
        r = np.atleast_1d(np.asarray(r, dtype=float))
        t = 0.5 * r * r
        lag = laguerre_table(mm, p.beta, t)
        with np.errstate(divide="ignore", invalid="ignore"):
            base = np.power(r, -p.alpha) * np.exp(-0.5 * t)
        if p.alpha == 0.0:
            base = np.exp(-0.5 * t)
        if mm <= self.m_max:
            lognorm = self._log_norm[k - 1, : mm + 1]
        else:
            ms = np.arange(mm + 1)
            lognorm = 0.5 * (lgamma(ms + 1.0) - p.beta * math.log(2.0) - lgamma(ms + p.beta + 1.0))
        return lag * np.exp(lognorm)[:, None] * base[None, :]

    def gram(self, modes, angular_overlap=None):
        """Gram matrix of normalised modes given as ``[(m, k), ...]``.

        The radial part uses the Gauss-Laguerre rule with weight
        ``t^((beta+beta')/2) e^{-t}``, exact for every pair.  The angular
        overlap defaults to the identity on ``k``; pass a matrix (indexed by
        ``k - 1``) to use a computed one.
        """
        n = len(modes)
        G = np.zeros((n, n), dtype=complex)
        for i, (m, k) in enumerate(modes):
            for j, (mp, kp) in enumerate(modes):
                ang = (1.0 if k == kp else 0.0) if angular_overlap is None else angular_overlap[k - 1, kp - 1]
                if ang == 0.0:
                    continue
                G[i, j] = ang * self._radial_overlap(m, k, mp, kp)
        return G

    def _radial_overlap(self, m, k, mp, kp):
        b1, b2 = self._pair(k).beta, self._pair(kp).beta
        s = 0.5 * (b1 + b2)
        t, w = gauss_laguerre(self.n_quad, s)
        l1 = laguerre_table(m, b1, t)[m]
        l2 = laguerre_table(mp, b2, t)[mp]
        c = math.exp(self._log_norm_at(m, k) + self._log_norm_at(mp, kp)) * 2.0**s
        return c * (w * l1 * l2).sum()

    def _log_norm_at(self, m, k):
        if m <= self.m_max:
            return self._log_norm[k - 1, m]
        b = self._pair(k).beta
        return 0.5 * (lgamma(m + 1.0) - b * math.log(2.0) - lgamma(m + b + 1.0))

    # datum expansion ----------------------------------------------------

    def project(self, label, profile):
        """Coefficients ``c_m`` and norm of one channel profile."""
        p = self.pair_for(label)
        n = self.model.dim
        if profile.gauss_rate is not None:
            lam = 0.5 + profile.gauss_rate
            t, w = gauss_laguerre(self.n_quad, p.beta, lam)
            r = np.sqrt(2.0 * t)
            # divide out the rule weight t^beta e^{-lam t}; what is left is a polynomial
            jac = r ** (n - 2) * np.exp(lam * t - p.beta * np.log(t))
            u = profile.analytic(r)
            c = (self.radial(p.k, r) * (u * jac * w)[None, :]).sum(axis=1)
            t2, w2 = gauss_laguerre(self.n_quad, p.beta, 2.0 * profile.gauss_rate)
            r2 = np.sqrt(2.0 * t2)
            jac2 = r2 ** (n - 2) * np.exp(2.0 * profile.gauss_rate * t2 - p.beta * np.log(t2))
            norm2 = float((np.abs(profile.analytic(r2)) ** 2 * jac2 * w2).sum())
        else:
            r, w = profile.rule(n)
            u = profile(r)
            c = (self.radial(p.k, r) * (u * w)[None, :]).sum(axis=1)
            norm2 = float((np.abs(u) ** 2 * w).sum())
        return c, norm2

    def expand_datum(self, datum):
        r"""Coefficients :math:`c_{m,k} = \int u_0\,\overline{\tilde V_{m,k}}` per channel.

        The angular integral is already done by the channel split, so each
        channel needs one radial projection.
        """
        if datum.model != self.model:
            raise DomainError("datum model %r differs from basis model %r" % (datum.model, self.model))
        coeffs = {}
        total = 0.0
        caught = 0.0
        for label, prof in datum.channels.items():
            c, nrm = self.project(label, prof)
            coeffs[label] = c
            total += nrm
            caught += float((np.abs(c) ** 2).sum())
        frac = caught / total if total > 0 else 1.0
        warn = None
        if frac < self.mass_floor:
            warn = "basis captures only %.10f of the datum mass (m_max=%d)" % (frac, self.m_max)
        return Expansion(coeffs, frac, total, warn)
