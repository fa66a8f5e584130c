r"""
Angular eigenproblems on the unit sphere.

Three model families are catalogued:

``FreeN(N)``
    :math:`-\Delta_{S^{N-1}}`; spherical harmonics, :math:`\mu = \ell(\ell+N-2)`.
``AharonovBohm2D(alpha_flux)``
    :math:`(-i\partial_\theta + \alpha)^2` on the circle; eigenfunctions
    :math:`e^{-ij\theta}/\sqrt{2\pi}` with :math:`\mu = (\alpha - j)^2`.
``InverseSquare3D(a)``
    :math:`-\Delta_{S^2} + a`, ``a > -1/4``; real spherical harmonics with
    :math:`\mu = a + \ell(\ell+1)`.

Eigenvalues are listed with multiplicity, nondecreasing, and the index ``k``
starts at 1.  Channel labels are ``j`` (an int) on the circle and ``(l, m)``
on the 2-sphere, with ``m = -l .. l`` ordered ascending.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .specfun import gegenbauer, legendre_table

__all__ = [
    "AngularEigenpair",
    "AngularModel",
    "FreeN",
    "AharonovBohm2D",
    "InverseSquare3D",
    "model_from_spec",
    "eigenvalues",
    "eigenfunction",
    "zonal",
    "weyl_check",
    "eigenfunction_sup_check",
    "real_sph_harm_table",
    "sphere_area",
]


def sphere_area(n):
    """Surface measure of :math:`S^{n-1}` in :math:`\\mathbb{R}^n`."""
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


@dataclass(frozen=True)
class AngularEigenpair:
    """One eigenvalue of the angular operator, with its derived exponents.

    ``beta = sqrt(((N-2)/2)^2 + mu)`` and ``alpha = (N-2)/2 - beta``.
    ``block`` numbers the distinct eigenvalues (0-based); pairs sharing a
    block share ``mu``.
    """

    k: int
    mu: float
    alpha: float
    beta: float
    label: object
    block: int


def _pair(n, k, mu, label, block):
    half = 0.5 * (n - 2)
    beta = math.sqrt(half * half + mu)
    return AngularEigenpair(k=k, mu=mu, alpha=half - beta, beta=beta, label=label, block=block)


class AngularModel:
    """Base class for the catalogued angular operators.

    Instances are immutable value objects; equality and hashing go through
    :meth:`params`.
    """

    kind = None
    dim = None

    def params(self):
        raise NotImplementedError

    def __eq__(self, other):
        return type(self) is type(other) and self.params() == other.params()

    def __hash__(self):
        return hash((self.kind, tuple(sorted(self.params().items()))))

    def __repr__(self):
        inner = ", ".join("%s=%r" % kv for kv in self.params().items())
        return "%s(%s)" % (type(self).__name__, inner)

    def to_spec(self):
        """Plain-dict form used by the run configuration."""
        return {"kind": self.kind, **self.params()}

    # spectrum -----------------------------------------------------------

    def eigenpairs(self, k_max):
        raise NotImplementedError

    def pair_for(self, label):
        """Eigenpair for a channel label, with its index ``k``."""
        raise NotImplementedError

    @property
    def mu1(self):
        return self.eigenpairs(1)[0].mu

    @property
    def alpha1(self):
        return self.eigenpairs(1)[0].alpha

    def block_pairs(self, n_blocks):
        """Eigenpairs grouped into the first ``n_blocks`` degenerate blocks."""
        raise NotImplementedError

    def blocks(self, n_blocks):
        """``(beta, mult)`` arrays for the first ``n_blocks`` distinct eigenvalues."""
        groups = self.block_pairs(n_blocks)
        beta = np.array([g[0].beta for g in groups])
        mult = np.array([len(g) for g in groups])
        return beta, mult

    def flipped(self):
        """The model with vector potential ``A -> -A`` (used for negative times)."""
        return self

    def conj_label(self, label):
        """Label of ``conj(psi_label)`` in the flipped model's basis."""
        return label


class _SphereModel(AngularModel):
    """Shared code for models whose eigenfunctions are spherical harmonics."""

    shift = 0.0

    def degree_mu(self, l):
        return self.shift + l * (l + self.dim - 2)

    def multiplicity(self, l):
        n = self.dim
        if n == 2:
            return 1 if l == 0 else 2
        return math.comb(l + n - 3, l) * (n + 2 * l - 2) // (n - 2)

    def _labels(self, l):
        if self.dim == 3:
            return [(l, m) for m in range(-l, l + 1)]
        if self.dim == 2:
            return [0] if l == 0 else [l, -l]
        return [(l, i) for i in range(self.multiplicity(l))]

    def eigenpairs(self, k_max):
        if k_max < 1:
            raise DomainError("k_max must be >= 1")
        out = []
        l = 0
        while len(out) < k_max:
            mu = self.degree_mu(l)
            for lab in self._labels(l):
                out.append(_pair(self.dim, len(out) + 1, mu, lab, l))
                if len(out) == k_max:
                    break
            l += 1
        return out

    def blocks(self, n_blocks):
        half = 0.5 * (self.dim - 2)
        ls = np.arange(n_blocks)
        beta = np.sqrt(half * half + self.shift + ls * (ls + self.dim - 2.0))
        mult = np.array([self.multiplicity(int(l)) for l in ls])
        return beta, mult

    def block_pairs(self, n_blocks):
        blocks = []
        k = 1
        for l in range(n_blocks):
            mu = self.degree_mu(l)
            labs = self._labels(l)
            blocks.append([_pair(self.dim, k + i, mu, lab, l) for i, lab in enumerate(labs)])
            k += len(labs)
        return blocks

    def pair_for(self, label):
        if self.dim == 3:
            l, m = label
            if not (l >= 0 and -l <= m <= l):
                raise DomainError("invalid spherical-harmonic label %r" % (label,))
            return _pair(3, l * l + m + l + 1, self.degree_mu(l), (l, m), l)
        if self.dim == 2:
            j = int(label)
            l = abs(j)
            k = 1 if l == 0 else 2 * l + (0 if j > 0 else 1)
            return _pair(2, k, self.degree_mu(l), j, l)
        l, i = label
        k = 1 + sum(self.multiplicity(q) for q in range(l)) + i
        return _pair(self.dim, k, self.degree_mu(l), (l, i), l)

    def zonal(self, l, cos_angle):
        r"""Reproducing kernel :math:`\sum_m Y_{l,m}(\theta)\overline{Y_{l,m}(\theta')}` of degree ``l``."""
        t = np.asarray(cos_angle, dtype=float)
        n = self.dim
        if n == 2:
            # cos(l * angle) = T_l(t)
            val = np.cos(l * np.arccos(np.clip(t, -1.0, 1.0))) / math.pi
            return val if l > 0 else np.full_like(t, 1.0 / (2.0 * math.pi))
        if n == 3:
            return (2 * l + 1) / (4.0 * math.pi) * legendre_table(l, t)[l]
        lam = 0.5 * (n - 2)
        return self.multiplicity(l) / sphere_area(n) * gegenbauer(l, lam, t) / gegenbauer(l, lam, 1.0)


class FreeN(_SphereModel):
    """Laplace-Beltrami operator on :math:`S^{N-1}` (no potentials)."""

    kind = "free"

    def __init__(self, N=3):
        if int(N) != N or N < 2:
            raise DomainError("FreeN needs an integer dimension N >= 2")
        self.dim = int(N)

    def params(self):
        return {"N": self.dim}


class InverseSquare3D(_SphereModel):
    """Constant inverse-square coupling ``a`` in three dimensions."""

    kind = "inverse-square"
    dim = 3

    def __init__(self, a):
        a = float(a)
        if not a > -0.25:
            raise DomainError("inverse-square coupling must satisfy a > -1/4 (got a = %g)" % a)
        self.a = a
        self.shift = a

    def params(self):
        return {"a": self.a}


class AharonovBohm2D(AngularModel):
    """Aharonov-Bohm flux line of circulation ``alpha_flux`` in the plane."""

    kind = "aharonov-bohm"
    dim = 2

    def __init__(self, alpha_flux):
        self.alpha_flux = float(alpha_flux)
        if not math.isfinite(self.alpha_flux):
            raise DomainError("flux must be finite")

    def params(self):
        return {"alpha": self.alpha_flux}

    def _key(self, j):
        d = abs(self.alpha_flux - j)
        return (d, abs(j), 0 if j >= 0 else 1)

    def _sorted_js(self, count):
        a = self.alpha_flux
        c = int(math.floor(a))
        span = count // 2 + 2
        js = sorted(range(c - span, c + span + 2), key=self._key)
        return js[:count]

    def eigenpairs(self, k_max):
        if k_max < 1:
            raise DomainError("k_max must be >= 1")
        out = []
        block = -1
        prev = None
        for j in self._sorted_js(k_max):
            d = abs(self.alpha_flux - j)
            if prev is None or not math.isclose(d, prev, rel_tol=0, abs_tol=1e-14):
                block += 1
                prev = d
            out.append(_pair(2, len(out) + 1, d * d, j, block))
        return out

    def block_pairs(self, n_blocks):
        pairs = self.eigenpairs(2 * n_blocks + 2)
        blocks = [[] for _ in range(n_blocks)]
        for p in pairs:
            if p.block < n_blocks:
                blocks[p.block].append(p)
        return blocks

    def pair_for(self, label):
        j = int(label)
        key = self._key(j)
        a = self.alpha_flux
        c = int(math.floor(a))
        span = abs(j - c) + 2
        k = 1 + sum(1 for q in range(c - span, c + span + 2) if self._key(q) < key)
        d = abs(a - j)
        # block id equals the number of strictly smaller distances
        dists = sorted({round(abs(a - q), 12) for q in range(c - span, c + span + 2)})
        block = dists.index(round(d, 12))
        return _pair(2, k, d * d, j, block)

    def flipped(self):
        return AharonovBohm2D(-self.alpha_flux)

    def conj_label(self, label):
        # conj(e^{-ij t}) = e^{+ij t}: channel -j of the flipped flux
        return -int(label)


def model_from_spec(spec):
    """Build a model from ``{"kind": ..., <params>}``."""
    if isinstance(spec, AngularModel):
        return spec
    if not isinstance(spec, dict) or "kind" not in spec:
        raise DomainError("model spec needs a 'kind' field")
    kind = spec["kind"]
    extra = set(spec) - {"kind"}
    if kind == "free":
        if extra - {"N"}:
            raise DomainError("unknown free-model fields: %s" % sorted(extra - {"N"}))
        return FreeN(spec.get("N", 3))
    if kind == "aharonov-bohm":
        if extra != {"alpha"}:
            raise DomainError("aharonov-bohm model needs exactly the field 'alpha'")
        return AharonovBohm2D(spec["alpha"])
    if kind == "inverse-square":
        if extra != {"a"}:
            raise DomainError("inverse-square model needs exactly the field 'a'")
        return InverseSquare3D(spec["a"])
    raise DomainError("unknown model kind %r (general a(theta) and A(theta) are not supported)" % kind)


def eigenvalues(model, k_max):
    """First ``k_max`` eigenpairs, nondecreasing, multiplicities expanded."""
    return model.eigenpairs(k_max)


# ----------------------------------------------------------------------------
# Eigenfunctions
# ----------------------------------------------------------------------------


def _normalized_legendre(l_max, cos_t, sin_t):
    """Fully normalised associated Legendre functions, no Condon-Shortley phase.

    ``P[l][m]`` with ``sum`` over the sphere of ``(P * trig)^2`` equal to 1
    after the ``sqrt(2)`` for ``m != 0`` is applied.
    """
    P = {}
    pmm = np.full_like(cos_t, 1.0 / math.sqrt(4.0 * math.pi))
    for m in range(l_max + 1):
        if m > 0:
            pmm = math.sqrt((2 * m + 1) / (2.0 * m)) * sin_t * pmm
        P[(m, m)] = pmm
        if m + 1 <= l_max:
            P[(m + 1, m)] = math.sqrt(2 * m + 3) * cos_t * pmm
        for l in range(m + 2, l_max + 1):
            a = math.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
            b = math.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
            P[(l, m)] = a * (cos_t * P[(l - 1, m)] - b * P[(l - 2, m)])
    return P


def real_sph_harm_table(l_max, theta):
    r"""Real orthonormal spherical harmonics for all ``l <= l_max``.

    Parameters
    ----------
    l_max : int
    theta : array_like, shape (..., 3)
        Unit vectors.

    Returns
    -------
    ndarray, shape ``((l_max+1)**2,) + theta.shape[:-1]``
        Row ``l*l + m + l`` holds :math:`Y_{l,m}`; ``m > 0`` uses
        :math:`\sqrt2\cos(m\phi)`, ``m < 0`` uses :math:`\sqrt2\sin(|m|\phi)`.
    """
    th = np.asarray(theta, dtype=float)
    x, y, z = th[..., 0], th[..., 1], th[..., 2]
    rho = np.hypot(x, y)
    phi = np.arctan2(y, x)
    P = _normalized_legendre(l_max, z, rho)
    out = np.empty(((l_max + 1) ** 2,) + z.shape)
    root2 = math.sqrt(2.0)
    for l in range(l_max + 1):
        base = l * l + l
        out[base] = P[(l, 0)]
        for m in range(1, l + 1):
            out[base + m] = root2 * P[(l, m)] * np.cos(m * phi)
            out[base - m] = root2 * P[(l, m)] * np.sin(m * phi)
    return out


def eigenfunction(model, pair, theta):
    """Normalised angular eigenfunction ``psi_k`` at unit vector(s) ``theta``.

    Returns complex values; on the circle ``theta`` may also be given as
    2-vectors.
    """
    th = np.asarray(theta, dtype=float)
    if th.shape[-1] != model.dim:
        raise DomainError("theta must have %d components" % model.dim)
    if model.dim == 2:
        j = int(pair.label)
        ang = np.arctan2(th[..., 1], th[..., 0])
        return np.exp(-1j * j * ang) / math.sqrt(2.0 * math.pi)
    if model.dim == 3:
        l, m = pair.label
        return real_sph_harm_table(l, th)[l * l + m + l].astype(complex)
    raise NotImplementedError("explicit eigenfunctions are provided for N <= 3 only")


def zonal(model, l, cos_angle):
    r"""Zonal function of degree ``l``: :math:`(2l+1)/(4\pi)\,P_l` on :math:`S^2`."""
    if not isinstance(model, _SphereModel):
        raise DomainError("zonal functions are defined for the sphere models")
    t = np.asarray(cos_angle, dtype=float)
    if np.any(np.abs(t) > 1.0 + 1e-12):
        raise DomainError("cos_angle must lie in [-1, 1]")
    val = model.zonal(l, np.clip(t, -1.0, 1.0))
    return float(val) if np.ndim(cos_angle) == 0 else val


# ----------------------------------------------------------------------------
# Asymptotic checks
# ----------------------------------------------------------------------------


def weyl_check(model, k_lo=100, k_hi=1000):
    r"""Stabilisation of :math:`\mu_k\,k^{-2/(N-1)}` over ``k_lo .. k_hi``.

    Returns a dict with the ratios, their midrange ``centre``, the relative
    half-range ``spread = (max - min) / (max + min)`` and, for reference,
    ``range_over_mean = (max - min) / mean``.
    """
    if not (k_hi >= 10 * k_lo >= 100):
        raise DomainError("weyl_check needs k_hi >= 10 * k_lo >= 100")
    pairs = model.eigenpairs(k_hi)
    ks = np.arange(k_lo, k_hi + 1)
    mus = np.array([pairs[k - 1].mu for k in ks])
    ratio = mus * ks ** (-2.0 / (model.dim - 1))
    hi, lo = ratio.max(), ratio.min()
    return {
        "k": ks,
        "ratio": ratio,
        "centre": 0.5 * (hi + lo),
        "spread": (hi - lo) / (hi + lo),
        "range_over_mean": (hi - lo) / ratio.mean(),
    }


def _sphere_points(n_theta=48, n_phi=96):
    u = np.cos(np.linspace(0.0, math.pi, n_theta))
    ph = np.linspace(0.0, 2.0 * math.pi, n_phi, endpoint=False)
    uu, pp = np.meshgrid(u, ph, indexing="ij")
    s = np.sqrt(np.clip(1.0 - uu * uu, 0.0, None))
    return np.stack([s * np.cos(pp), s * np.sin(pp), uu], axis=-1).reshape(-1, 3)


def eigenfunction_sup_check(model, k_max=400):
    r"""Empirical constant in :math:`\sup|\psi_k| \le C\,|\mu_k|^{\lfloor (N-1)/2\rfloor}`.

    The sup is taken on a fixed sample grid; eigenvalues with
    :math:`|\mu_k| < 1` are compared against 1 instead.  Returns a dict with
    the fitted ``C`` (max ratio) and ``trend``, the log-log slope of the
    ratio against ``k`` (non-positive when the bound is not outgrown).
    """
    power = (model.dim - 1) // 2
    pairs = model.eigenpairs(k_max)
    if model.dim == 2:
        sups = np.full(len(pairs), 1.0 / math.sqrt(2.0 * math.pi))
    elif model.dim == 3:
        l_max = max(p.label[0] for p in pairs)
        table = np.abs(real_sph_harm_table(l_max, _sphere_points()))
        sups = np.array([table[p.k - 1].max() for p in pairs])
    else:
        raise NotImplementedError("sup check needs explicit eigenfunctions (N <= 3)")
    mus = np.array([max(abs(p.mu), 1.0) for p in pairs])
    ratio = sups / mus ** power
    ks = np.arange(1, len(pairs) + 1)
    tail = ks >= max(2, len(pairs) // 10)
    trend = np.polyfit(np.log(ks[tail]), np.log(ratio[tail]), 1)[0]
    return {"C": float(ratio.max()), "ratio": ratio, "trend": float(trend)}
