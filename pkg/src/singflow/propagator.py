r"""
Solvers for :math:`i u_t = L u`, :math:`u(0) = u_0`.

Three independent routes:

``eigen``
    Expand in the oscillator basis, rotate each coefficient by
    :math:`e^{-i\gamma \arctan t}` and undo the pseudo-conformal change of
    variables.
``channel``
    One Hankel-type radial integral per angular channel, by panel
    Gauss-Legendre refined until two halvings agree.
``kernel``
    Direct volume quadrature of the kernel representation; slow, for
    validation on small grids.

Negative times go through :func:`propagate_negative_time`, i.e. conjugation
and the flow with the reversed vector potential.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .angular import eigenfunction
from .datum import ChannelDatum, RadialProfile
from .errors import DomainError
from .kernel import KernelEvaluator, kernel_ab, kernel_zonal, _plan
from .oscillator import OscillatorBasis
from .quadrature import adaptive_panels, panel_rule, sphere_rule
from .specfun import bessel_j

__all__ = [
    "SolutionField",
    "propagate",
    "propagate_eigen",
    "propagate_channel",
    "propagate_kernel",
    "propagate_negative_time",
    "natural_gaussian_solution",
    "free_gaussian_solution",
    "free_flow_quadrature",
    "evolved_datum",
    "radial_grid",
    "channel_profiles",
    "channel_l2_norm",
    "oscillator_extent",
    "solution_extent",
]


@dataclass
class SolutionField:
    """Values of ``u(., t)`` at a set of points.

    ``weights`` (optional) are quadrature weights attached to the points, so
    that norms can be taken on the same grid.
    """

    t: float
    points: np.ndarray
    values: np.ndarray
    method: str
    meta: dict = field(default_factory=dict)
    weights: np.ndarray = None

    def l2_norm(self):
        if self.weights is None:
            raise DomainError("field carries no quadrature weights")
        return float(np.sqrt((np.abs(self.values) ** 2 * self.weights).sum()))


def radial_grid(dim, r_max, h=0.05, order=8, degree=0, direction=None, r_min=0.0):
    """Product grid (radial Gauss-Legendre panels x sphere rule) with weights.

    ``degree=0`` returns a single ray along ``direction`` with the sphere
    area folded into the weights, which is exact for one-channel fields whose
    angular factor has unit modulus times ``|psi|``; otherwise use the
    returned weights only for rotation-invariant integrands.
    """
    n = max(1, int(math.ceil((r_max - r_min) / h)))
    r, w = panel_rule(np.linspace(r_min, r_max, n + 1), order)
    w = w * r ** (dim - 1)
    if degree:
        th, tw = sphere_rule(dim, degree)
        pts = (r[:, None, None] * th[None, :, :]).reshape(-1, dim)
        return pts, (w[:, None] * tw[None, :]).reshape(-1)
    d = np.zeros(dim) if direction is None else np.asarray(direction, dtype=float)
    if direction is None:
        d[-1] = 1.0
    d = d / np.linalg.norm(d)
    return r[:, None] * d[None, :], w


def _polar(points, dim):
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[-1] != dim:
        raise DomainError("points must have %d components" % dim)
    r = np.linalg.norm(pts, axis=-1)
    th = pts / np.where(r > 0, r, 1.0)[:, None]
    th[r == 0] = np.eye(dim)[-1]
    return pts, r, th


# ----------------------------------------------------------------------------
# Oscillator eigen-expansion
# ----------------------------------------------------------------------------


def _eigen_values(basis, expansion, t, pts, r, th):
    n = basis.model.dim
    s2 = 1.0 + t * t
    rho = r / math.sqrt(s2)
    rot = math.atan(t)
    phi = np.zeros(r.shape, dtype=complex)
    for label, c in expansion.coeffs.items():
        p = basis.pair_for(label)
        gam = np.array([basis.eigenvalue(m, p.k) for m in range(basis.m_max + 1)])
        cm = c * np.exp(-1j * gam * rot)
        radial = (basis.radial(p.k, rho) * cm[:, None]).sum(axis=0)
        phi = phi + radial * eigenfunction(basis.model, p, th)
    return s2 ** (-0.25 * n) * np.exp(1j * t * r * r / (4.0 * s2)) * phi


def propagate_eigen(basis, datum, t, points, expansion=None):
    """Solution at time ``t >= 0`` by the oscillator eigen-expansion.

    The expansion error is the only approximation: the norm of the result
    equals that of the projected datum.
    """
    if t < 0:
        raise DomainError("propagate_eigen needs t >= 0; use propagate_negative_time")
    exp = expansion if expansion is not None else basis.expand_datum(datum)
    pts, r, th = _polar(points, basis.model.dim)
    vals = _eigen_values(basis, exp, float(t), pts, r, th)
    meta = {"captured_mass": exp.captured, "m_max": basis.m_max, "warning": exp.warning}
    return SolutionField(float(t), pts, vals, "eigen", meta)


def evolved_datum(basis, datum, t, r_max=None):
    """Channel datum of ``u(., t)`` computed by the eigen-expansion.

    Useful for chaining flows (round trips, negative times).
    """
    exp = basis.expand_datum(datum)
    n = basis.model.dim
    r_max = r_max or math.sqrt(1.0 + t * t) * (datum.r_supp + 10.0)
    ch = {}
    for label, c in exp.coeffs.items():
        p = basis.pair_for(label)
        gam = np.array([basis.eigenvalue(m, p.k) for m in range(basis.m_max + 1)])
        cm = c * np.exp(-1j * gam * math.atan(t))

        def f(r, cm=cm, k=p.k):
            r = np.atleast_1d(r)
            s2 = 1.0 + t * t
            rad = (basis.radial(k, r / math.sqrt(s2)) * cm[:, None]).sum(axis=0)
            return s2 ** (-0.25 * n) * np.exp(1j * t * r * r / (4.0 * s2)) * rad

        ch[label] = RadialProfile(f, 0.0, r_max)
    return ChannelDatum(basis.model, ch, {"kind": "evolved", "t": t, "from": datum.meta})


# ----------------------------------------------------------------------------
# Per-channel Hankel quadrature
# ----------------------------------------------------------------------------


def propagate_channel(model, datum, t, points, rel_tol=1e-10, order=16, max_halvings=8, chunk=256):
    r"""Solution at time ``t > 0`` from the per-channel radial integrals.

    .. math::

        u(x,t) = \frac{-i}{2t} e^{i|x|^2/4t} |x|^{-(N-2)/2} \sum_k \psi_k(\hat x)
        e^{-i\beta_k\pi/2} \int_0^\infty u_{0,k}(r) e^{ir^2/4t}
        J_{\beta_k}(r|x|/2t)\, r^{N/2}\, dr

    Panels start no wider than :math:`(\pi/4)\min(2t/|x|, 2t/R, 2\sqrt t)`
    and are halved until two refinements agree to ``rel_tol``.
    """
    if not t > 0:
        raise DomainError("propagate_channel needs t > 0")
    if datum.model != model:
        raise DomainError("datum belongs to a different model")
    n = model.dim
    pts, r, th = _polar(points, n)
    out = np.zeros(r.shape, dtype=complex)
    budget = {"panels": {}, "error": 0.0}
    for label, prof in datum.channels.items():
        p = model.pair_for(label)
        a, b = prof.r_lo, prof.r_hi
        # |J| <= 1 bounds every integral by this; it sets the absolute floor
        rn, rw = prof.rule(1)
        bound = float((np.abs(prof(rn)) * rn ** (0.5 * n) * rw).sum())
        integral = np.zeros(r.shape, dtype=complex)
        for start in range(0, r.size, chunk):
            rx = r[start : start + chunk]
            xmax = float(rx.max()) if rx.size else 0.0
            h = 0.25 * math.pi * min(2.0 * t / max(xmax, 1e-300), 2.0 * t / b, 2.0 * math.sqrt(t))
            h = min(h, (b - a) / 2.0)

            def f(nodes, rx=rx):
                arg = np.outer(rx, nodes) / (2.0 * t)
                jb = bessel_j(p.beta, arg)
                return (prof(nodes) * np.exp(1j * nodes * nodes / (4.0 * t)) * nodes ** (0.5 * n))[None, :] * jb

            est, err, panels = adaptive_panels(f, a, b, h, rel_tol, order, max_halvings, rel_tol * bound)
            integral[start : start + chunk] = est
            budget["error"] = max(budget["error"], err)
            budget["panels"][repr(label)] = max(budget["panels"].get(repr(label), 0), panels)
        ang = eigenfunction(model, p, th)
        out = out + ang * np.exp(-0.5j * math.pi * p.beta) * integral
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(r > 0, r ** (-0.5 * (n - 2)), 0.0) if n != 2 else np.ones_like(r)
    vals = (-0.5j / t) * np.exp(1j * r * r / (4.0 * t)) * scale * out
    return SolutionField(float(t), pts, vals, "channel", {"quadrature": budget, "rel_tol": rel_tol})


# ----------------------------------------------------------------------------
# Volume quadrature of the kernel representation
# ----------------------------------------------------------------------------


def propagate_kernel(ev, datum, t, points, h=0.1, order=8, degree=None, chunk=8192):
    r"""Solution at time ``t > 0`` by volume quadrature of

    .. math::

        u(x,t) = \frac{e^{i|x|^2/4t}}{i (2t)^{N/2}} \int_{B_R}
        K\Big(\frac{x}{\sqrt{2t}}, \frac{y}{\sqrt{2t}}\Big) e^{i|y|^2/4t} u_0(y)\,dy

    over the datum support.  Intended for small validation grids.
    """
    if not t > 0:
        raise DomainError("propagate_kernel needs t > 0")
    model = ev.model
    n = model.dim
    pts, r, th = _polar(points, n)
    edges = [0.0]
    for prof in datum.channels.values():
        edges += [prof.r_lo, prof.r_hi]
    R = max(edges)
    rn, rw = panel_rule(np.unique(np.concatenate([np.linspace(0.0, R, int(math.ceil(R / h)) + 1), edges])), order)
    if degree is None:
        zmax = float(r.max()) * R / (2.0 * t)
        cut = _plan(ev, np.array([zmax]))[0][0]
        labels = list(datum.channels)
        ang_deg = max(model.pair_for(lab).block for lab in labels)
        degree = 2 * (int(cut) + 1 + ang_deg) + 2
    sph, sw = sphere_rule(n, degree)
    ys = (rn[:, None, None] * sph[None, :, :]).reshape(-1, n)
    yw = (rw[:, None] * rn[:, None] ** (n - 1) * sw[None, :]).reshape(-1)
    yr = np.repeat(rn, len(sw))
    f0 = datum.evaluate(ys) * np.exp(1j * yr * yr / (4.0 * t)) * yw
    keep = f0 != 0
    ys, yr, f0 = ys[keep], yr[keep], f0[keep]
    yth = ys / yr[:, None]
    out = np.zeros(r.shape, dtype=complex)
    for i in range(r.size):
        acc = 0.0j
        for s in range(0, yr.size, chunk):
            z = r[i] * yr[s : s + chunk] / (2.0 * t)
            if model.dim == 2 and hasattr(model, "alpha_flux"):
                ang = np.arctan2(th[i, 1], th[i, 0]) - np.arctan2(yth[s : s + chunk, 1], yth[s : s + chunk, 0])
                kv = kernel_ab(ev, z, ang)
            elif hasattr(model, "zonal") and not (model.kind == "free" and not ev.series):
                cos = np.clip(yth[s : s + chunk] @ th[i], -1.0, 1.0)
                kv = kernel_zonal(ev, z, cos)
            else:
                from .kernel import free_kernel

                kv = free_kernel(pts[i] / math.sqrt(2.0 * t), ys[s : s + chunk] / math.sqrt(2.0 * t), n)
            acc += (kv * f0[s : s + chunk]).sum()
        out[i] = acc
    vals = np.exp(1j * r * r / (4.0 * t)) / (1j * (2.0 * t) ** (0.5 * n)) * out
    return SolutionField(float(t), pts, vals, "kernel", {"degree": degree, "nodes": int(yr.size)})


def free_flow_quadrature(datum, t, points, h=0.05, order=8, degree=40):
    r"""Free flow by direct volume quadrature of the heat-type formula

    .. math:: u(x,t) = (4\pi i t)^{-N/2} \int e^{i|x-y|^2/4t} u_0(y)\,dy .
    """
    n = datum.model.dim
    pts, r, _ = _polar(points, n)
    R = datum.r_supp
    lo = min(p.r_lo for p in datum.channels.values())
    rn, rw = panel_rule(np.linspace(lo, R, int(math.ceil((R - lo) / h)) + 1), order)
    sph, sw = sphere_rule(n, degree)
    ys = (rn[:, None, None] * sph[None, :, :]).reshape(-1, n)
    yw = (rw[:, None] * rn[:, None] ** (n - 1) * sw[None, :]).reshape(-1)
    f0 = datum.evaluate(ys) * yw
    out = np.array([(np.exp(1j * np.sum((x - ys) ** 2, axis=1) / (4.0 * t)) * f0).sum() for x in pts])
    pref = (4.0 * math.pi * 1j * t) ** (-0.5 * n)
    return SolutionField(float(t), pts, pref * out, "free-quadrature")


# ----------------------------------------------------------------------------
# Closed forms
# ----------------------------------------------------------------------------


def natural_gaussian_solution(model, width, t, points, channels=None, amplitude=1.0):
    r"""Exact solution for the datum ``amplitude * r^{-alpha_k} e^{-r^2/(4w^2)}`` in each channel.

    Uses :math:`\int_0^\infty r^{\beta+1} e^{-p r^2} J_\beta(c r)\,dr
    = c^\beta (2p)^{-\beta-1} e^{-c^2/4p}` with complex ``p``.
    """
    n = model.dim
    if channels is None:
        channels = [model.eigenpairs(1)[0].label]
    pts, r, th = _polar(points, n)
    t = float(t)
    if t == 0.0:
        out = np.zeros(r.shape, dtype=complex)
        for lab in channels:
            pair = model.pair_for(lab)
            amp = amplitude[lab] if isinstance(amplitude, dict) else amplitude
            with np.errstate(divide="ignore"):
                out = out + amp * r ** (-pair.alpha) * np.exp(-r * r / (4 * width**2)) * eigenfunction(model, pair, th)
        return SolutionField(0.0, pts, out, "exact")
    if t < 0:
        # conj of the forward flow with reversed potential
        flipped = model.flipped()
        conj_ch = [model.conj_label(lab) for lab in channels]
        amp = {model.conj_label(k): np.conj(v) for k, v in amplitude.items()} if isinstance(amplitude, dict) else np.conj(amplitude)
        fwd = natural_gaussian_solution(flipped, width, -t, pts, conj_ch, amp)
        return SolutionField(t, pts, np.conj(fwd.values), "exact")
    p = 1.0 / (4.0 * width * width) - 0.25j / t
    c = r / (2.0 * t)
    out = np.zeros(r.shape, dtype=complex)
    for lab in channels:
        pair = model.pair_for(lab)
        amp = amplitude[lab] if isinstance(amplitude, dict) else amplitude
        b = pair.beta
        # |x|^{-(N-2)/2} c^beta = |x|^{-alpha} (2t)^{-beta}
        with np.errstate(divide="ignore", invalid="ignore"):
            radial = r ** (-pair.alpha) * (2.0 * t) ** (-b) * (2.0 * p) ** (-b - 1.0) * np.exp(-c * c / (4.0 * p))
        ang = eigenfunction(model, pair, th)
        out = out + amp * ang * np.exp(-0.5j * math.pi * b) * radial
    vals = (-0.5j / t) * np.exp(1j * r * r / (4.0 * t)) * out
    return SolutionField(t, pts, vals, "exact")


def free_gaussian_solution(dim, t, points, width=1.0):
    r"""Free evolution of :math:`e^{-|x|^2/(4w^2)}`: :math:`(1+it/w^2)^{-N/2} e^{-|x|^2/(4(w^2+it))}`."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    s = width * width + 1j * t
    vals = (s / (width * width)) ** (-0.5 * dim) * np.exp(-np.sum(pts * pts, axis=-1) / (4.0 * s))
    return SolutionField(float(t), pts, vals, "exact")


# ----------------------------------------------------------------------------
# Dispatcher and negative times
# ----------------------------------------------------------------------------


def propagate(datum, t, points, method="eigen", **options):
    """Run one of the propagators on ``datum`` (``t > 0``; ``t < 0`` is routed
    through :func:`propagate_negative_time`)."""
    if t < 0:
        return propagate_negative_time(datum, -t, points, method, **options)
    model = datum.model
    if method == "eigen":
        keys = {"m_max", "k_max", "n_quad"}
        kw = {k: v for k, v in options.items() if k in keys}
        if "k_max" not in kw:
            kw["k_max"] = max(p.k for p in datum.pairs().values())
        return propagate_eigen(OscillatorBasis(model, **kw), datum, t, points)
    if method == "channel":
        keys = {"rel_tol", "order", "max_halvings"}
        return propagate_channel(model, datum, t, points, **{k: v for k, v in options.items() if k in keys})
    if method == "kernel":
        ev = KernelEvaluator(model, **{k: v for k, v in options.items() if k in {"k_max", "tail_tol"}})
        keys = {"h", "order", "degree"}
        return propagate_kernel(ev, datum, t, points, **{k: v for k, v in options.items() if k in keys})
    raise DomainError("unknown method %r" % method)


def propagate_negative_time(datum, s, points, method="eigen", **options):
    r"""Solution at time ``-s`` via :math:`u(-s) = \overline{e^{-isL_{-A}}\,\overline{u_0}}`.

    The inner flow runs forward with the reversed vector potential; for
    models without one this is plain conjugation around the forward flow.
    """
    if not s > 0:
        raise DomainError("propagate_negative_time needs s > 0")
    inner = propagate(datum.conj(), s, points, method, **options)
    return SolutionField(-float(s), inner.points, np.conj(inner.values), method + "/reversed", dict(inner.meta))


# ----------------------------------------------------------------------------
# Channelwise norms
# ----------------------------------------------------------------------------


def _probe_direction(model, pair):
    """A unit vector where ``|psi_k|`` is near its maximum."""
    th, _ = sphere_rule(model.dim, 2 * pair.block + 8)
    vals = np.abs(eigenfunction(model, pair, th))
    return th[int(np.argmax(vals))]


def channel_profiles(datum, t, r, method="eigen", **options):
    """Radial parts ``u_k(r, t)`` of the solution, one per channel label.

    Each channel is propagated on its own along a ray and divided by its
    angular factor there, so any of the point-wise methods can be used.
    """
    model = datum.model
    r = np.asarray(r, dtype=float)
    out = {}
    for label, prof in datum.channels.items():
        pair = model.pair_for(label)
        d = _probe_direction(model, pair)
        sub = ChannelDatum(model, {label: prof}, datum.meta)
        fld = propagate(sub, t, r[:, None] * d[None, :], method, **options)
        out[label] = fld.values / eigenfunction(model, pair, d[None, :])[0]
    return out


def oscillator_extent(basis, expansion, rel=1e-10):
    """Radius beyond which the oscillator-frame field is negligible.

    Modes whose coefficients fall below ``rel`` of the largest are ignored.
    """
    top = 0.0
    for label, c in expansion.coeffs.items():
        p = basis.pair_for(label)
        big = np.nonzero(np.abs(c) > rel * np.abs(c).max())[0]
        m = int(big.max()) if big.size else 0
        top = max(top, 2.0 * math.sqrt(2.0 * m + p.beta + 1.0))
    return top + 6.0


def solution_extent(datum, t, loss=1e-12, m_max=64):
    """Radius holding all but ``loss`` of the mass of ``u(t)``, located with the eigen route."""
    n = datum.model.dim
    k_max = max(p.k for p in datum.pairs().values())
    basis = OscillatorBasis(datum.model, m_max=m_max, k_max=k_max)
    exp = basis.expand_datum(datum)
    top = math.sqrt(1.0 + t * t) * max(datum.r_supp, oscillator_extent(basis, exp))
    edges = np.linspace(0.0, top, int(math.ceil(top / 0.05)) + 1)
    rn, rw = panel_rule(edges, 4)
    s2 = 1.0 + t * t
    dens = np.zeros(rn.shape)
    for label, c in exp.coeffs.items():
        k = basis.pair_for(label).k
        gam = np.array([basis.eigenvalue(m, k) for m in range(basis.m_max + 1)])
        cm = c * np.exp(-1j * gam * math.atan(t))
        rad = (basis.radial(k, rn / math.sqrt(s2)) * cm[:, None]).sum(axis=0)
        dens += np.abs(rad) ** 2
    per = (dens * rw * rn ** (n - 1)).reshape(len(edges) - 1, -1).sum(axis=1)
    tail = np.cumsum(per[::-1])[::-1]
    idx = np.nonzero(tail > loss * per.sum())[0]
    return float(edges[min(int(idx.max()) + 1, len(edges) - 1)]) if idx.size else top


def channel_l2_norm(datum, t, r_max=None, method="eigen", h=0.05, order=16, **options):
    r""":math:`\|u(t)\|_{L^2}` as :math:`(\sum_k \int_0^{R} |u_k(r,t)|^2 r^{N-1} dr)^{1/2}`.

    Uses orthonormality of the angular factors.  ``r_max`` must cover the
    spread of the solution at time ``t``; by default it comes from
    :func:`solution_extent`.
    """
    n = datum.model.dim
    if r_max is None:
        r_max = solution_extent(datum, t)
    edges = np.concatenate([[0.0], np.geomspace(1e-8, h, 16), np.arange(2.0 * h, r_max + h, h)])
    rn, rw = panel_rule(edges, order)
    prof = channel_profiles(datum, t, rn, method, **options)
    total = sum(float((np.abs(v) ** 2 * rw * rn ** (n - 1)).sum()) for v in prof.values())
    return math.sqrt(total)

