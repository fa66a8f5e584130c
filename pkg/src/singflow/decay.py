r"""
Time-decay measurements: norms of solutions, exponent fits and kernel scans.

The weighted norm is

.. math::

    \|u\|_{p,\alpha_1} = \Big(\int (1+|x|^{-\alpha_1})^{2-p} |u|^p\,dx\Big)^{1/p},

with :math:`p=\infty` read as :math:`\sup |u|/(1+|x|^{-\alpha_1})`.
Unknown constants are reported as fitted intercepts and never asserted.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .angular import AharonovBohm2D
from .errors import DomainError, ResolutionError
from .kernel import KernelResult, kernel_ab, kernel_zonal
from .oscillator import OscillatorBasis
from .parallel import chunked_map
from .propagator import SolutionField, oscillator_extent, propagate_eigen, propagate
from .quadrature import panel_rule, sphere_rule

__all__ = [
    "lp_norm",
    "sup_norm",
    "weighted_norm",
    "theory_slope",
    "DecayReport",
    "fit_decay",
    "loglog_fit",
    "KernelScan",
    "kernel_sup_scan",
]

ORIGIN_RESOLUTION = 1e-6


def lp_norm(field, p):
    """Plain :math:`L^p` norm of a field carrying quadrature weights."""
    if p == math.inf:
        return sup_norm(field)
    if field.weights is None:
        raise DomainError("L^p norms need a field with quadrature weights")
    return float(((np.abs(field.values) ** p) * field.weights).sum() ** (1.0 / p))


def sup_norm(field):
    return float(np.max(np.abs(field.values)))


def weighted_norm(field, p, alpha1):
    """Weighted norm :math:`\\|u\\|_{p,\\alpha_1}` on the field's grid.

    Raises
    ------
    ResolutionError
        ``alpha1 > 0`` (singular weight) but the grid stays away from the
        origin, so the part of the integral or sup sitting there is missed.
    """
    if p < 1:
        raise DomainError("p must be >= 1")
    r = np.linalg.norm(field.points, axis=-1)
    if alpha1 > 0 and (p == math.inf or p < 2) and r.min() > ORIGIN_RESOLUTION:
        raise ResolutionError(
            "grid does not reach r <= %g, where the weight |x|^-%g acts" % (ORIGIN_RESOLUTION, alpha1)
        )
    with np.errstate(divide="ignore"):
        weight = 1.0 + np.power(r, -float(alpha1))
    if p == math.inf:
        return float(np.max(np.abs(field.values) / weight))
    if field.weights is None:
        raise DomainError("finite-p norms need a field with quadrature weights")
    dens = weight ** (2.0 - p) * np.abs(field.values) ** p
    dens = np.where(np.isfinite(dens), dens, 0.0)
    return float((dens * field.weights).sum() ** (1.0 / p))


def theory_slope(dim, p, alpha1=None):
    """Large-time exponent: :math:`-N(1/2-1/p)`, plus :math:`\\alpha_1(1-2/p)` when weighted."""
    inv = 0.0 if p == math.inf else 1.0 / p
    s = -dim * (0.5 - inv)
    if alpha1 is not None and alpha1 > 0:
        s += alpha1 * (1.0 - 2.0 * inv)
    return s


def loglog_fit(x, y):
    """Least-squares line through ``(log x, log y)``: slope, intercept, rms residual, slope stderr."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    A = np.stack([lx, np.ones_like(lx)], axis=1)
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    res = ly - A @ coef
    dof = max(len(lx) - 2, 1)
    s2 = float(res @ res) / dof
    cov = s2 * np.linalg.inv(A.T @ A)
    return float(coef[0]), float(coef[1]), float(np.sqrt(np.mean(res**2))), float(np.sqrt(cov[0, 0]))


@dataclass
class DecayReport:
    """Norm time series and the fitted power law ``norm ~ C t^slope``."""

    model: object
    times: np.ndarray
    norm_kind: str
    p: float
    values: np.ndarray
    slope: float
    intercept: float
    residual: float
    stderr: float
    theory: float
    meta: dict = field(default_factory=dict)

    @property
    def constant(self):
        return math.exp(self.intercept)

    def within(self, tol):
        return abs(self.slope - self.theory) <= tol

    def as_dict(self):
        return {
            "model": self.model.to_spec(),
            "norm": self.norm_kind,
            "p": "inf" if self.p == math.inf else self.p,
            "times": [float(t) for t in self.times],
            "values": [float(v) for v in self.values],
            "slope": self.slope,
            "theory": self.theory,
            "intercept": self.intercept,
            "residual": self.residual,
            "stderr": self.stderr,
            **self.meta,
        }


def _angles(model, labels):
    if model.dim == 2:
        spread = max((abs(int(lab)) for lab in labels), default=0)
        n = 1 if len(labels) == 1 else 16 * (spread + 1)
        if n == 1:
            return np.array([[1.0, 0.0]]), np.array([2.0 * math.pi])
        return sphere_rule(2, n - 1)
    deg = max(model.pair_for(lab).block for lab in labels)
    if len(labels) == 1 and deg == 0:
        return np.array([[0.0, 0.0, 1.0]]), np.array([4.0 * math.pi])
    return sphere_rule(3, 2 * deg + 8)


def _sup_grid(rho_max, n, rho_min):
    lin = np.linspace(0.0, rho_max, n + 1)[1:]
    geo = np.geomspace(rho_min, lin[0], max(8, n // 8))
    return np.unique(np.concatenate([geo, lin]))


def _field_sup(basis, expansion, t, labels, rho_max, alpha1, rho_min, tol=0.01, n0=400, max_doublings=5):
    th, _ = _angles(basis.model, labels)
    scale = math.sqrt(1.0 + t * t)
    prev = None
    n = n0
    for _ in range(max_doublings + 1):
        rho = _sup_grid(rho_max, n, rho_min)
        pts = (scale * rho[:, None, None] * th[None, :, :]).reshape(-1, basis.model.dim)
        fld = propagate_eigen(basis, None, t, pts, expansion=expansion)
        val = weighted_norm(fld, math.inf, alpha1) if alpha1 is not None else sup_norm(fld)
        if prev is not None and abs(val - prev) <= tol * abs(val):
            return val, n
        prev = val
        n *= 2
    raise ResolutionError("sup norm did not settle to %g after %d doublings" % (tol, max_doublings))


def _field_lp(basis, expansion, t, labels, rho_max, p, alpha1):
    model = basis.model
    th, tw = _angles(model, labels)
    scale = math.sqrt(1.0 + t * t)
    edges = np.concatenate([[0.0], np.geomspace(1e-8, 0.05, 24), np.arange(0.1, rho_max + 0.1, 0.1)])
    rho, w = panel_rule(edges, 12)
    pts = (scale * rho[:, None, None] * th[None, :, :]).reshape(-1, model.dim)
    wts = (scale**model.dim * w[:, None] * rho[:, None] ** (model.dim - 1) * tw[None, :]).reshape(-1)
    fld = propagate_eigen(basis, None, t, pts, expansion=expansion)
    fld.weights = wts
    if alpha1 is None:
        return lp_norm(fld, p)
    return weighted_norm(fld, p, alpha1)


def fit_decay(model, datum, times, p=math.inf, weighted=False, m_max=64, sup_tol=0.01, rho_min=1e-12):
    """Norms of the eigen-expansion solution over ``times`` and their log-log slope.

    Parameters
    ----------
    p : float
        Lebesgue exponent (``math.inf`` for the sup norm).
    weighted : bool
        Use :func:`weighted_norm` with :math:`\\alpha_1` of the model.
    """
    times = np.asarray(times, dtype=float)
    if np.any(times <= 0):
        raise DomainError("decay fits need positive times")
    if times.max() < 10.0 * times.min():
        raise DomainError("decay fits need at least one decade of times")
    labels = list(datum.channels)
    k_max = max(model.pair_for(lab).k for lab in labels)
    basis = OscillatorBasis(model, m_max=m_max, k_max=k_max)
    exp = basis.expand_datum(datum)
    rho_max = oscillator_extent(basis, exp)
    alpha1 = model.alpha1 if weighted else None
    vals = []
    grid_sizes = []
    for t in times:
        if p == math.inf:
            v, n = _field_sup(basis, exp, t, labels, rho_max, alpha1, rho_min, tol=sup_tol)
            grid_sizes.append(n)
        else:
            v = _field_lp(basis, exp, t, labels, rho_max, p, alpha1)
        vals.append(v)
    vals = np.array(vals)
    slope, icpt, res, err = loglog_fit(times, vals)
    kind = ("weighted-" if weighted else "") + ("sup" if p == math.inf else "L%g" % p)
    theory = 0.0 if p == 2 else theory_slope(model.dim, p, model.alpha1 if weighted else None)
    meta = {"captured_mass": exp.captured, "rho_max": rho_max, "m_max": m_max}
    if grid_sizes:
        meta["sup_grid"] = grid_sizes
    if exp.warning:
        meta["warning"] = exp.warning
    return DecayReport(model, times, kind, p, vals, slope, icpt, res, err, theory, meta)


# ----------------------------------------------------------------------------
# Kernel scans
# ----------------------------------------------------------------------------


@dataclass
class KernelScan:
    """Kernel magnitudes over an ``(r, angle)`` grid.

    ``profile`` holds ``max over angles |K|`` per radius; ``trend`` is the
    log-log slope of the windowed running maximum for ``r >= 1`` (positive
    means growth).
    """

    model: object
    r: np.ndarray
    angles: np.ndarray
    values: np.ndarray
    tail_bound: np.ndarray
    terms_used: np.ndarray
    ok: np.ndarray
    profile: np.ndarray
    sup: float
    weighted_sup: float
    trend: float
    failed: int

    def small_r_exponent(self, r_lo=1e-6, r_hi=1e-3):
        """Log-log slope of ``profile`` over ``[r_lo, r_hi]``."""
        sel = (self.r >= r_lo) & (self.r <= r_hi) & np.isfinite(self.profile)
        if sel.sum() < 3:
            raise ResolutionError("fewer than three radii in [%g, %g]" % (r_lo, r_hi))
        return loglog_fit(self.r[sel], self.profile[sel])[0]

    def dyadic_maxima(self, r_lo=1.0):
        """``(edges, maxima)`` of ``profile`` over windows ``[r_lo 2^j, r_lo 2^{j+1})``."""
        edges, maxes = [], []
        a = r_lo
        top = float(self.r.max())
        while a < top:
            b = min(2.0 * a, top * (1 + 1e-12))
            w = (self.r >= a) & (self.r < b) & np.isfinite(self.profile)
            if w.any():
                edges.append((a, b))
                maxes.append(float(self.profile[w].max()))
            a = 2.0 * a
        return edges, np.array(maxes)

    def saturation(self, r_lo=1.0):
        """Geometric fit to the growth of the dyadic window maxima.

        Returns ``(ratio, limit)``: the mean ratio of successive increments
        and the limit implied by summing them geometrically.  A ratio below
        one with a finite limit means the running maximum levels off; a
        ratio of one or more means no saturation was seen.
        """
        _, m = self.dyadic_maxima(r_lo)
        inc = np.diff(np.maximum.accumulate(m))
        pos = inc[inc > 0]
        if pos.size == 0:
            return 0.0, float(m.max()) if m.size else math.nan
        if pos.size < 2:
            return math.nan, math.nan
        q = float(np.exp(np.mean(np.diff(np.log(pos)))))
        limit = float(np.maximum.accumulate(m)[-1] + (pos[-1] * q / (1.0 - q) if q < 1 else math.inf))
        return q, limit

    def rows(self):
        """CSV rows: r, angle, Re K, Im K, |K|, tail bound, terms used."""
        R, A = np.meshgrid(self.r, self.angles, indexing="ij")
        for i in range(R.size):
            ij = np.unravel_index(i, R.shape)
            if not self.ok[ij]:
                continue
            v = self.values[ij]
            yield (R[ij], A[ij], v.real, v.imag, abs(v), self.tail_bound[ij], int(self.terms_used[ij]))


def _trend(r, prof, windows=12):
    sel = (r >= 1.0) & np.isfinite(prof)
    if sel.sum() < 4:
        return 0.0
    rs, ps = r[sel], prof[sel]
    edges = np.geomspace(rs.min(), rs.max() * (1 + 1e-12), windows + 1)
    mids, maxes = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        w = (rs >= a) & (rs < b)
        if w.any():
            mids.append(math.sqrt(a * b))
            maxes.append(ps[w].max())
    if len(mids) < 3:
        return 0.0
    return loglog_fit(mids, maxes)[0]


def kernel_sup_scan(ev, r_grid, angle_grid, threads=None, chunk=16):
    """Scan ``|K|`` over ``r = |x||y|`` and an angle grid.

    Angles are the difference of polar angles for the Aharonov-Bohm model
    and ``cos`` of the angle between ``x`` and ``y`` for sphere models.
    Points where the tail criterion fails are skipped and counted.  Radii
    are processed in fixed chunks of ``chunk`` rows, in parallel when
    ``threads`` (or ``$SINGFLOW_THREADS``) exceeds one.
    """
    model = ev.model
    r = np.asarray(r_grid, dtype=float)
    ang = np.asarray(angle_grid, dtype=float)
    if np.any(r <= 0):
        raise DomainError("scan radii must be positive")
    R, A = np.meshgrid(r, ang, indexing="ij")
    fn = kernel_ab if isinstance(model, AharonovBohm2D) else kernel_zonal
    parts = chunked_map(lambda s: fn(ev, R[s], A[s], full_output=True, raise_on_fail=False), r.size, chunk, threads)
    res = KernelResult(*(np.concatenate([getattr(p, f) for p in parts]) for f in ("value", "tail_bound", "terms_used", "ok")))
    mag = np.where(res.ok, np.abs(res.value), np.nan)
    prof = np.nanmax(np.where(np.isnan(mag), -np.inf, mag), axis=1)
    prof = np.where(np.isfinite(prof), prof, np.nan)
    sup = float(np.nanmax(mag))
    a1 = model.alpha1
    wsup = float(np.nanmax(mag / (1.0 + R ** (-a1)))) if a1 > 0 else sup
    return KernelScan(
        model,
        r,
        ang,
        res.value,
        res.tail_bound,
        res.terms_used,
        res.ok,
        prof,
        sup,
        wsup,
        _trend(r, prof),
        int((~res.ok).sum()),
    )
