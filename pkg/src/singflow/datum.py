r"""
Initial data split into angular channels.

A datum is :math:`u_0(x) = \sum_k u_{0,k}(|x|)\,\psi_k(x/|x|)`.  Each channel
profile is a callable on the radius with a finite support ``[r_lo, r_hi]``;
analytic profiles are cut where the discarded mass drops below
``MASS_LOSS`` of the total, and the cut radii are recorded.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .angular import AharonovBohm2D, sphere_area
from .errors import DomainError
from .quadrature import panel_rule, sphere_rule

__all__ = [
    "MASS_LOSS",
    "RadialProfile",
    "ChannelDatum",
    "gaussian_datum",
    "natural_gaussian_datum",
    "gaussian_ring_datum",
    "indicator_datum",
    "mode_datum",
    "datum_from_spec",
]

MASS_LOSS = 1e-10
CHANNEL_FLOOR = 1e-12


@dataclass(frozen=True)
class RadialProfile:
    """One channel profile ``u_{0,k}(r)``.

    ``gauss_rate`` marks the natural class ``r^{-alpha_k} e^{-c r^2/2} p(r^2)``
    (with ``c = gauss_rate``) whose oscillator coefficients can be computed
    exactly by Gauss-Laguerre quadrature; such profiles are projected
    analytically, without the support cut.
    """

    func: object
    r_lo: float
    r_hi: float
    gauss_rate: float = None
    breaks: tuple = ()

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        inside = (r >= self.r_lo) & (r <= self.r_hi)
        with np.errstate(all="ignore"):
            vals = np.asarray(self.func(np.where(inside, r, self.r_lo if self.r_lo > 0 else self.r_hi)), dtype=complex)
        return np.where(inside, vals, 0.0)

    def analytic(self, r):
        """Profile without the support cut."""
        return np.asarray(self.func(np.asarray(r, dtype=float)), dtype=complex)

    def conj(self):
        f = self.func
        return replace(self, func=lambda r: np.conj(f(r)))

    def scaled(self, c):
        f = self.func
        return replace(self, func=lambda r: c * f(r))

    def rule(self, dim, h=0.05, order=16):
        """Radial nodes and weights (including ``r^{N-1}``) over the support."""
        edges = [self.r_lo, *[b for b in self.breaks if self.r_lo < b < self.r_hi], self.r_hi]
        pieces = []
        for a, b in zip(edges[:-1], edges[1:]):
            n = max(1, int(math.ceil((b - a) / h)))
            e = np.linspace(a, b, n + 1)
            if a == 0.0:
                e = np.concatenate([[0.0], e[1] * 0.5 ** np.arange(20, 0, -1), e[1:]])
            pieces.append(panel_rule(e, order))
        x = np.concatenate([p[0] for p in pieces])
        w = np.concatenate([p[1] for p in pieces])
        return x, w * x ** (dim - 1)

    def norm2(self, dim):
        x, w = self.rule(dim)
        return float((np.abs(self(x)) ** 2 * w).sum())


@dataclass(frozen=True)
class ChannelDatum:
    """Channel decomposition of an initial datum for ``model``.

    ``channels`` maps a channel label (``j`` or ``(l, m)``) to a
    :class:`RadialProfile`.  ``meta`` records how the datum was built and
    where analytic profiles were cut.
    """

    model: object
    channels: dict
    meta: dict = field(default_factory=dict)

    @property
    def r_supp(self):
        return max(p.r_hi for p in self.channels.values())

    def norm2(self):
        return sum(p.norm2(self.model.dim) for p in self.channels.values())

    def pairs(self):
        return {lab: self.model.pair_for(lab) for lab in self.channels}

    def conj(self, model=None):
        """Datum of ``conj(u0)``, labelled for ``model`` (default: flipped model)."""
        target = self.model.flipped() if model is None else model
        ch = {self.model.conj_label(lab): p.conj() for lab, p in self.channels.items()}
        return ChannelDatum(target, ch, dict(self.meta, conjugated=True))

    def combine(self, other, a=1.0, b=1.0):
        """The datum ``a*self + b*other`` (same model)."""
        if other.model != self.model:
            raise DomainError("cannot combine data of different models")
        ch = {}
        for lab in sorted(set(self.channels) | set(other.channels), key=repr):
            p, q = self.channels.get(lab), other.channels.get(lab)
            if p is None:
                ch[lab] = q.scaled(b)
            elif q is None:
                ch[lab] = p.scaled(a)
            else:
                fp, fq = p.func, q.func
                ch[lab] = RadialProfile(
                    lambda r, fp=fp, fq=fq: a * fp(r) + b * fq(r),
                    min(p.r_lo, q.r_lo),
                    max(p.r_hi, q.r_hi),
                    None,
                    tuple(sorted(set(p.breaks) | set(q.breaks) | {p.r_lo, p.r_hi, q.r_lo, q.r_hi})),
                )
        return ChannelDatum(self.model, ch, {"combined": True})

    def evaluate(self, points):
        """``u0`` at Cartesian points of shape ``(P, N)``."""
        from .angular import eigenfunction

        pts = np.asarray(points, dtype=float)
        r = np.linalg.norm(pts, axis=-1)
        th = pts / np.where(r > 0, r, 1.0)[..., None]
        out = np.zeros(r.shape, dtype=complex)
        for lab, prof in self.channels.items():
            out = out + prof(r) * eigenfunction(self.model, self.model.pair_for(lab), th)
        return out


def _cut_radii(func, dim, r_max, loss=MASS_LOSS, inner=True):
    """Smallest ``[r_lo, r_hi]`` keeping all but ``loss`` of the mass."""
    edges = np.linspace(0.0, r_max, int(math.ceil(r_max / 0.02)) + 1)
    x, w = panel_rule(edges, 8)
    dens = np.abs(np.asarray(func(x), dtype=complex)) ** 2 * x ** (dim - 1) * w
    per = dens.reshape(len(edges) - 1, -1).sum(axis=1)
    total = per.sum()
    if total <= 0:
        raise DomainError("datum has zero mass")
    cum = np.cumsum(per)
    # split the allowance between the two ends
    hi_idx = int(np.searchsorted(cum, total * (1.0 - 0.5 * loss)))
    r_hi = float(edges[min(hi_idx + 1, len(edges) - 1)])
    r_lo = 0.0
    if inner:
        lo_idx = int(np.searchsorted(cum, total * 0.5 * loss))
        r_lo = float(edges[lo_idx])
    return r_lo, r_hi


def _radial_label(model):
    """Label of the rotation-invariant channel (l = 0 or j = 0)."""
    return 0 if model.dim == 2 else (0, 0)


def natural_gaussian_datum(model, width=1.0, channels=None, amplitude=1.0):
    r"""Profiles ``amplitude * r^{-alpha_k} e^{-r^2/(4 w^2)}`` in the given channels.

    This is the natural regularity class of the operator: every channel is a
    finite Gauss-Laguerre problem in the oscillator basis, and the
    per-channel propagator integral has a closed form.
    """
    if channels is None:
        channels = [model.eigenpairs(1)[0].label]
    if not width > 0:
        raise DomainError("width must be positive")
    ch = {}
    cuts = {}
    for lab in channels:
        pair = model.pair_for(lab)
        amp = amplitude[lab] if isinstance(amplitude, dict) else amplitude
        a = pair.alpha

        def f(r, a=a, amp=amp):
            with np.errstate(divide="ignore"):
                return amp * np.power(r, -a) * np.exp(-(r * r) / (4.0 * width * width))

        # mass tail of r^{2 beta + 1} e^{-r^2/(2 w^2)}
        from scipy.special import gammainccinv

        r_hi = width * math.sqrt(2.0 * gammainccinv(pair.beta + 1.0, MASS_LOSS))
        ch[lab] = RadialProfile(f, 0.0, r_hi, gauss_rate=1.0 / (2.0 * width * width))
        cuts[repr(lab)] = r_hi
    return ChannelDatum(model, ch, {"kind": "natural-gaussian", "width": width, "cut_radius": cuts})


def gaussian_ring_datum(model, radius=2.5, width=0.5, channel=None, amplitude=1.0):
    r"""Single channel profile :math:`e^{-(r-R)^2/(4w^2)}`, cut at mass loss ``MASS_LOSS``."""
    if channel is None:
        channel = _radial_label(model)
    if not (radius > 0 and width > 0):
        raise DomainError("ring radius and width must be positive")
    model.pair_for(channel)

    def f(r):
        return amplitude * np.exp(-((r - radius) ** 2) / (4.0 * width * width))

    r_lo, r_hi = _cut_radii(f, model.dim, radius + 40.0 * width)
    prof = RadialProfile(f, r_lo, r_hi)
    return ChannelDatum(
        model,
        {channel: prof},
        {"kind": "gaussian-ring", "radius": radius, "width": width, "cut": [r_lo, r_hi]},
    )


def indicator_datum(model, radius=1.0):
    """Indicator of the ball of the given radius (rotation invariant channel only)."""
    if not radius > 0:
        raise DomainError("indicator radius must be positive")
    c = math.sqrt(sphere_area(model.dim))
    prof = RadialProfile(lambda r: np.full(np.shape(r), c), 0.0, float(radius))
    return ChannelDatum(model, {_radial_label(model): prof}, {"kind": "indicator", "radius": radius})


def gaussian_datum(model, width=1.0, center=None, degree=None):
    r"""Gaussian :math:`e^{-|x-c|^2/(4w^2)}` projected onto angular channels.

    A centred Gaussian sits in the rotation-invariant channel.  Off-centre
    Gaussians are projected with a product rule on the sphere; channels are
    kept until their mass drops below ``1e-12`` of the total.
    """
    n = model.dim
    if not width > 0:
        raise DomainError("width must be positive")
    c = np.zeros(n) if center is None else np.asarray(center, dtype=float)
    if c.shape != (n,):
        raise DomainError("center must have %d components" % n)
    if not np.any(c):
        s = math.sqrt(sphere_area(n))
        f = lambda r: s * np.exp(-(r * r) / (4.0 * width * width))  # noqa: E731
        _, r_hi = _cut_radii(f, n, 40.0 * width, inner=False)
        # with a regular radial channel this is exactly the natural class
        rate = 1.0 / (2.0 * width * width) if model.pair_for(_radial_label(model)).alpha == 0.0 else None
        prof = RadialProfile(f, 0.0, r_hi, gauss_rate=rate)
        meta = {"kind": "gaussian", "width": width, "center": c.tolist(), "cut": [0.0, r_hi]}
        return ChannelDatum(model, {_radial_label(model): prof}, meta)
    from .angular import eigenfunction

    cn = float(np.linalg.norm(c))
    r_hi = cn + 2.0 * width * math.sqrt(2.0 * math.log(1.0 / MASS_LOSS) + 10.0)
    deg = degree or int(2 * (cn * r_hi / (2.0 * width * width)) + 24)
    sph, sw = sphere_rule(n, deg)
    pairs = model.eigenpairs(_channel_count(model, deg // 2))
    conj_psi = np.conj(np.stack([eigenfunction(model, p, sph) for p in pairs]))

    def project(r, conj_psi=conj_psi):
        r = np.atleast_1d(r)
        pts = r[:, None, None] * sph[None, :, :]
        u = np.exp(-np.sum((pts - c) ** 2, axis=-1) / (4.0 * width * width))
        return (u[:, None, :] * conj_psi[None, :, :] * sw).sum(axis=-1)

    probe_r, probe_w = panel_rule(np.linspace(0.0, r_hi, 129), 8)
    prof_vals = project(probe_r)
    mass = (np.abs(prof_vals) ** 2 * (probe_r ** (n - 1) * probe_w)[:, None]).sum(axis=0)
    total = mass.sum()
    keep = [i for i in range(len(pairs)) if mass[i] >= CHANNEL_FLOOR * total]
    ch = {}
    for i in keep:
        ch[pairs[i].label] = RadialProfile(lambda r, i=i: project(r)[:, i], 0.0, r_hi)
    meta = {"kind": "gaussian", "width": width, "center": c.tolist(), "cut": [0.0, r_hi], "channels": len(ch)}
    return ChannelDatum(model, ch, meta)


def _channel_count(model, degree):
    if isinstance(model, AharonovBohm2D) or model.dim == 2:
        return 2 * degree + 1
    return (degree + 1) ** 2


def mode_datum(basis, m, label, amplitude=1.0):
    """Normalised oscillator mode ``(m, label)`` as a single-channel datum."""
    pair = basis.model.pair_for(label)

    def f(r):
        return amplitude * basis.radial(pair.k, np.atleast_1d(r), m_max=m)[m]

    from scipy.special import gammainccinv

    r_hi = math.sqrt(2.0 * (gammainccinv(pair.beta + 1.0 + 2 * m, MASS_LOSS) + 2.0 * m))
    prof = RadialProfile(f, 0.0, r_hi, gauss_rate=0.5)
    return ChannelDatum(basis.model, {label: prof}, {"kind": "mode", "m": m, "label": repr(label)})


def datum_from_spec(model, spec):
    """Build a datum from ``{"shape": ..., <params>}``."""
    spec = dict(spec)
    shape = spec.pop("shape", None)
    try:
        if shape == "gaussian":
            return gaussian_datum(model, **spec)
        if shape == "natural-gaussian":
            ch = spec.pop("channels", None)
            if ch is not None:
                ch = [tuple(c) if isinstance(c, list) else c for c in ch]
            return natural_gaussian_datum(model, channels=ch, **spec)
        if shape == "gaussian-ring":
            if isinstance(spec.get("channel"), list):
                spec["channel"] = tuple(spec["channel"])
            return gaussian_ring_datum(model, **spec)
        if shape == "indicator":
            return indicator_datum(model, **spec)
    except TypeError as exc:
        raise DomainError("bad parameters for datum %r: %s" % (shape, exc)) from None
    raise DomainError("unknown datum shape %r" % shape)
