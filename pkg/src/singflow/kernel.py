r"""
Propagation kernel :math:`K(x, y)` as a truncated Bessel-spherical series.

Each term is :math:`e^{-i\beta_k\pi/2}\,|x y|^{-(N-2)/2} J_{\beta_k}(|x||y|)\,
\psi_k(\hat x)\overline{\psi_k(\hat y)}`.  Terms are grouped into blocks of
equal :math:`\mu_k`; the series is cut after block ``b`` once both

* ``e * r <= beta_b + 1`` (past this point the Bessel bound shrinks
  super-geometrically), and
* the bound on block ``b`` itself is below ``tail_tol``.

The reported tail bound sums the same block bounds over the omitted blocks.
Cuts are decided per point, so a value never depends on its neighbours in a
batch.
"""

import math
from dataclasses import dataclass

import numpy as np

from .angular import AharonovBohm2D, FreeN, InverseSquare3D, real_sph_harm_table, sphere_area
from .errors import DomainError, TruncationError
from .specfun import bessel_j, bessel_j_ladder, lgamma

__all__ = [
    "KernelEvaluator",
    "KernelResult",
    "free_kernel",
    "kernel_eval",
    "kernel_series",
    "kernel_ab",
    "ab_w",
    "kernel_inverse_square",
    "kernel_zonal",
    "kernel_eigen_residual",
]

_EXTRA_BLOCKS = 24


@dataclass(frozen=True)
class KernelEvaluator:
    """Model plus truncation policy.

    ``series=True`` forces the Bessel series for the free model instead of
    the closed form.
    """

    model: object
    k_max: int = 5000
    tail_tol: float = 1e-10
    series: bool = False

    def __post_init__(self):
        if self.k_max < 1:
            raise DomainError("k_max must be positive")
        if not self.tail_tol > 0:
            raise DomainError("tail_tol must be positive")


@dataclass
class KernelResult:
    """Kernel values with per-point truncation diagnostics."""

    value: np.ndarray
    tail_bound: np.ndarray
    terms_used: np.ndarray
    ok: np.ndarray


def free_kernel(x, y, N=None):
    r"""Closed form :math:`e^{-ix\cdot y}/((2\pi)^{N/2} i^{(N-2)/2})`."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.shape[-1] if N is None else N
    phase = np.exp(-0.25j * math.pi * (n - 2))
    return np.exp(-1j * np.sum(x * y, axis=-1)) * phase / (2.0 * math.pi) ** (n / 2.0)


# ----------------------------------------------------------------------------
# Truncation policy
# ----------------------------------------------------------------------------


def _log_block_bounds(model, beta, mult, r):
    """log of sup over angles of |block b| at r (rows b, columns points)."""
    n = model.dim
    alpha = 0.5 * (n - 2) - beta
    weight = np.log(mult / sphere_area(n))
    with np.errstate(divide="ignore", invalid="ignore"):
        logr = np.log(r)
        rpart = -alpha[:, None] * logr[None, :]
    # r = 0: r^(-alpha) is 1 for alpha = 0 and 0 for alpha < 0
    rpart = np.where(r[None, :] == 0.0, np.where(alpha[:, None] == 0.0, 0.0, -np.inf), rpart)
    return rpart - (beta * math.log(2.0) + lgamma(beta + 1.0))[:, None] + weight[:, None]


def _plan(ev, r, n_blocks=None):
    """Per-point cut block index, tail bound, terms used and success flag.

    With ``n_blocks`` given, every point keeps exactly that many blocks
    (used by finite-difference stencils, which need one common term set).
    """
    model = ev.model
    r = np.asarray(r, dtype=float)
    log_tol = math.log(ev.tail_tol)
    if n_blocks is not None:
        beta, mult = model.blocks(n_blocks + _EXTRA_BLOCKS)
        logb = _log_block_bounds(model, beta, mult, r)
        cut = np.full(r.shape, n_blocks - 1)
        tail = np.exp(logb[n_blocks:]).sum(axis=0)
        terms = np.full(r.shape, int(mult[:n_blocks].sum()))
        return cut, tail, terms, np.ones(r.shape, bool), beta[:n_blocks]
    rmax = float(r.max()) if r.size else 0.0
    n = max(8, int(math.e * rmax) + 8)
    while True:
        beta, mult = model.blocks(n + _EXTRA_BLOCKS)
        logb = _log_block_bounds(model, beta, mult, r)
        cond = (math.e * r[None, :] <= beta[:n, None] + 1.0) & (logb[:n] <= log_tol)
        found = cond.any(axis=0)
        cum = np.cumsum(mult)
        if found.all() or cum[n - 1] > ev.k_max:
            break
        n *= 2
    cut = np.where(found, np.argmax(cond, axis=0), n - 1)
    # respect the term cap
    cap = int(np.searchsorted(cum, ev.k_max, side="right")) - 1
    over = cut > cap
    cut = np.minimum(cut, max(cap, 0))
    ok = found & ~over
    bounds = np.exp(logb)
    below = np.arange(bounds.shape[0])[:, None] > cut[None, :]
    tail = np.where(below, bounds, 0.0).sum(axis=0)
    terms = cum[cut]
    return cut, tail, terms, ok, beta[: int(cut.max()) + 1 if cut.size else 1]


def _finish(ev, value, cut_info, scalar, full_output, raise_on_fail):
    cut, tail, terms, ok, _ = cut_info
    if raise_on_fail and not np.all(ok):
        bad = int(np.argmin(ok))
        raise TruncationError(
            "tail criterion not reached within k_max=%d terms" % ev.k_max,
            partial=value.reshape(-1)[bad],
            tail_bound=float(tail.reshape(-1)[bad]),
            terms_used=int(terms.reshape(-1)[bad]),
        )
    if scalar:
        value, tail, terms, ok = value.reshape(-1)[0], float(tail.reshape(-1)[0]), int(terms.reshape(-1)[0]), bool(ok.reshape(-1)[0])
    if full_output:
        return KernelResult(value, tail, terms, ok)
    return value


def _masked_sum(terms, cut):
    """Sum rows ``0 .. cut[p]`` of ``terms`` for each point, in row order."""
    acc = np.zeros(terms.shape[1:], dtype=complex)
    for b in range(terms.shape[0]):
        acc = acc + np.where(b <= cut, terms[b], 0.0)
    return acc


def _radial_factors(beta, r, dim):
    r"""Rows :math:`e^{-i\beta\pi/2} r^{-(N-2)/2} J_\beta(r)` for each block."""
    fr = beta - np.floor(beta)
    ladder = beta.size > 1 and np.allclose(fr, fr[0], atol=1e-13) and np.allclose(np.diff(beta), 1.0, atol=1e-13)
    if ladder:
        jb = bessel_j_ladder(float(fr[0]), beta.size - 1, r)
    else:
        jb = bessel_j(beta[:, None], r[None, :])
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = r ** (-0.5 * (dim - 2)) if dim != 2 else np.ones_like(r)
    return np.exp(-0.5j * math.pi * beta)[:, None] * jb * scale[None, :]


# ----------------------------------------------------------------------------
# Series forms
# ----------------------------------------------------------------------------


def _split(x, y, dim):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if x.shape[-1] != dim or y.shape[-1] != dim:
        raise DomainError("points must have %d components" % dim)
    x, y = np.broadcast_arrays(x, y)
    nx = np.linalg.norm(x, axis=-1)
    ny = np.linalg.norm(y, axis=-1)
    if np.any(nx == 0) or np.any(ny == 0):
        raise DomainError("kernel series needs x != 0 and y != 0")
    return x / nx[:, None], y / ny[:, None], nx * ny


def kernel_series(ev, x, y, full_output=False, n_blocks=None, raise_on_fail=True):
    """Kernel by the explicit eigenfunction series (N = 2 or 3).

    Sums :math:`\\psi_k(\\hat x)\\overline{\\psi_k(\\hat y)}` term by term, which
    is the definition itself; :func:`kernel_zonal` and :func:`kernel_ab` are
    the faster reduced forms.
    """
    model = ev.model
    scalar = np.ndim(x) == 1 and np.ndim(y) == 1
    xh, yh, r = _split(x, y, model.dim)
    plan = _plan(ev, r, n_blocks)
    cut = plan[0]
    groups = model.block_pairs(int(cut.max()) + 1)
    beta = np.array([g[0].beta for g in groups])
    rad = _radial_factors(beta, r, model.dim)
    terms = np.empty((len(groups), r.size), dtype=complex)
    if model.dim == 3:
        L = len(groups) - 1
        tx = real_sph_harm_table(L, xh)
        ty = real_sph_harm_table(L, yh)
        for b, g in enumerate(groups):
            rows = [p.k - 1 for p in g]
            prod = np.zeros(r.size)
            for i in rows:
                prod = prod + tx[i] * ty[i]
            terms[b] = rad[b] * prod
    elif model.dim == 2:
        phx = np.arctan2(xh[:, 1], xh[:, 0])
        phy = np.arctan2(yh[:, 1], yh[:, 0])
        for b, g in enumerate(groups):
            prod = np.zeros(r.size, dtype=complex)
            for p in g:
                prod = prod + np.exp(-1j * p.label * (phx - phy))
            terms[b] = rad[b] * prod / (2.0 * math.pi)
    else:
        raise DomainError("explicit series is available for N = 2, 3")
    value = _masked_sum(terms, cut)
    return _finish(ev, value, plan, scalar, full_output, raise_on_fail)


def kernel_zonal(ev, r, cos_angle, full_output=False, n_blocks=None, raise_on_fail=True):
    r"""Sphere-model kernel as a function of ``r = |x||y|`` and ``cos = x.y/(|x||y|)``.

    Each block collapses to its zonal function by the addition theorem.
    """
    model = ev.model
    if not hasattr(model, "zonal"):
        raise DomainError("zonal reduction needs a sphere model")
    scalar = np.ndim(r) == 0 and np.ndim(cos_angle) == 0
    r_b, c_b = np.broadcast_arrays(np.asarray(r, dtype=float), np.asarray(cos_angle, dtype=float))
    shape = r_b.shape
    r_f = r_b.reshape(-1)
    c_f = c_b.reshape(-1)
    if np.any(r_f < 0):
        raise DomainError("r must be non-negative")
    if np.any(np.abs(c_f) > 1.0 + 1e-12):
        raise DomainError("cos_angle must lie in [-1, 1]")
    c_f = np.clip(c_f, -1.0, 1.0)
    plan = _plan(ev, r_f, n_blocks)
    cut = plan[0]
    nb = int(cut.max()) + 1 if cut.size else 1
    beta, _ = model.blocks(nb)
    ru, inv = np.unique(r_f, return_inverse=True)
    rad = _radial_factors(beta, ru, model.dim)[:, inv]
    zon = np.stack([model.zonal(l, c_f) for l in range(nb)])
    value = _masked_sum(rad * zon, cut).reshape(shape)
    plan = (cut.reshape(shape), plan[1].reshape(shape), plan[2].reshape(shape), plan[3].reshape(shape), plan[4])
    return _finish(ev, value, plan, scalar, full_output, raise_on_fail)


def kernel_inverse_square(ev, r, cos_angle, full_output=False, n_blocks=None, raise_on_fail=True):
    """Inverse-square (or free 3D) kernel at ``(|x||y|, cos angle)``."""
    if not isinstance(ev.model, (InverseSquare3D, FreeN)) or ev.model.dim != 3:
        raise DomainError("kernel_inverse_square needs an inverse-square or free 3D model")
    return kernel_zonal(ev, r, cos_angle, full_output, n_blocks, raise_on_fail)


def ab_w(ev, z, s, full_output=False, n_blocks=None, raise_on_fail=True):
    r""":math:`W(z,s)=\sum_j e^{-i|\alpha-j|\pi/2}e^{-ijs}J_{|\alpha-j|}(z)`."""
    model = ev.model
    if not isinstance(model, AharonovBohm2D):
        raise DomainError("ab_w needs an Aharonov-Bohm model")
    scalar = np.ndim(z) == 0 and np.ndim(s) == 0
    z_b, s_b = np.broadcast_arrays(np.asarray(z, dtype=float), np.asarray(s, dtype=float))
    shape = z_b.shape
    z_f = z_b.reshape(-1)
    s_f = s_b.reshape(-1)
    if np.any(z_f < 0):
        raise DomainError("z must be non-negative")
    plan = _plan(ev, z_f, n_blocks)
    cut = plan[0]
    groups = model.block_pairs(int(cut.max()) + 1)
    a = model.alpha_flux
    c = math.floor(a)
    if a - c >= 1.0:
        # a sits just below an integer and a - floor(a) rounded up to 1
        c += 1
    # j <= floor(a): order (a - c) + (c - j); j > a: order (c + 1 - a) + (j - c - 1)
    f_lo, f_hi = max(a - c, 0.0), c + 1.0 - a
    js = [p.label for g in groups for p in g]
    n_lo = max([c - j for j in js if j <= c], default=0)
    n_hi = max([j - c - 1 for j in js if j > c], default=0)
    zu, inv = np.unique(z_f, return_inverse=True)
    lad_lo = bessel_j_ladder(f_lo, n_lo, zu)[:, inv]
    if f_hi < 1.0:
        lad_hi = bessel_j_ladder(f_hi, n_hi, zu)[:, inv]
    else:
        lad_hi = bessel_j_ladder(0.0, n_hi + 1, zu)[1:, inv]
    terms = np.empty((len(groups), z_f.size), dtype=complex)
    for b, g in enumerate(groups):
        acc = np.zeros(z_f.size, dtype=complex)
        for p in g:
            j = p.label
            jv = lad_lo[c - j] if j <= c else lad_hi[j - c - 1]
            acc = acc + np.exp(-0.5j * math.pi * p.beta - 1j * j * s_f) * jv
        terms[b] = acc
    value = _masked_sum(terms, cut)
    # block bounds carry the 1/(2 pi) of |psi|^2; W itself is 2 pi larger
    tail = 2.0 * math.pi * plan[1]
    plan = (cut.reshape(shape), tail.reshape(shape), plan[2].reshape(shape), plan[3].reshape(shape), plan[4])
    return _finish(ev, value.reshape(shape), plan, scalar, full_output, raise_on_fail)


def kernel_ab(ev, z, s, full_output=False, n_blocks=None, raise_on_fail=True):
    r"""Aharonov-Bohm kernel :math:`W(z, s)/(2\pi)` with ``z = |x||y|``, ``s = angle(x) - angle(y)``."""
    out = ab_w(ev, z, s, full_output=True, n_blocks=n_blocks, raise_on_fail=raise_on_fail)
    value = out.value / (2.0 * math.pi)
    tail = out.tail_bound / (2.0 * math.pi)
    if full_output:
        return KernelResult(value, tail, out.terms_used, out.ok)
    return value


def kernel_eval(ev, x, y, full_output=False, raise_on_fail=True):
    """Kernel :math:`K(x, y)` for any catalogued model.

    ``x`` and ``y`` are points (or stacks of points) in :math:`R^N`.  The
    free model uses the closed form unless ``ev.series`` is set; the
    Aharonov-Bohm and sphere models use their reduced series.

    Raises
    ------
    TruncationError
        The tail criterion was not met within ``ev.k_max`` terms.
    """
    model = ev.model
    x_a = np.asarray(x, dtype=float)
    y_a = np.asarray(y, dtype=float)
    scalar = x_a.ndim == 1 and y_a.ndim == 1
    if isinstance(model, FreeN) and not ev.series:
        val = free_kernel(x_a, y_a, model.dim)
        if not full_output:
            return complex(val) if scalar else val
        zero = np.zeros(np.shape(val))
        if scalar:
            return KernelResult(complex(val), 0.0, 0, True)
        return KernelResult(val, zero, zero.astype(int), np.ones(np.shape(val), bool))
    xh, yh, r = _split(x_a, y_a, model.dim)
    if isinstance(model, AharonovBohm2D):
        s = np.arctan2(xh[:, 1], xh[:, 0]) - np.arctan2(yh[:, 1], yh[:, 0])
        out = kernel_ab(ev, r, s, full_output=True, raise_on_fail=raise_on_fail)
    else:
        cos = np.clip(np.sum(xh * yh, axis=-1), -1.0, 1.0)
        out = kernel_zonal(ev, r, cos, full_output=True, raise_on_fail=raise_on_fail)
    if scalar:
        out = KernelResult(complex(out.value[0]), float(out.tail_bound[0]), int(out.terms_used[0]), bool(out.ok[0]))
    return out if full_output else out.value


# ----------------------------------------------------------------------------
# Eigen-equation residual
# ----------------------------------------------------------------------------


def _stencil(x, h):
    n = x.size
    pts = [x]
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        pts += [x + e, x - e]
    return np.array(pts)


def kernel_eigen_residual(ev, y, x, h=1e-3):
    r"""Relative residual of :math:`L K(\cdot, y) = |y|^2 K(\cdot, y)` at ``x``.

    ``L`` is :math:`-\Delta + a/|x|^2` for sphere models and
    :math:`-\Delta - 2iA\cdot\nabla + |A|^2` for the Aharonov-Bohm flux, with
    second-order central differences of step ``h``.  One common set of
    series terms is used across the stencil.
    """
    model = ev.model
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.linalg.norm(x) <= math.sqrt(model.dim) * h * 2:
        raise DomainError("finite-difference stencil touches the origin")
    pts = _stencil(x, h)
    ny = np.linalg.norm(y)
    if isinstance(model, FreeN) and not ev.series:
        vals = free_kernel(pts, y[None, :])
    else:
        r_all = np.linalg.norm(pts, axis=1) * ny
        plan = _plan(ev, np.array([r_all.max()]))
        nb = int(plan[0][0]) + 1
        if isinstance(model, AharonovBohm2D):
            s = np.arctan2(pts[:, 1], pts[:, 0]) - math.atan2(y[1], y[0])
            vals = kernel_ab(ev, r_all, s, n_blocks=nb)
        else:
            cos = pts @ y / (np.linalg.norm(pts, axis=1) * ny)
            vals = kernel_zonal(ev, r_all, cos, n_blocks=nb)
    k0 = vals[0]
    lap = sum(vals[1 + 2 * i] + vals[2 + 2 * i] - 2.0 * k0 for i in range(x.size)) / (h * h)
    lk = -lap
    rx = np.linalg.norm(x)
    if isinstance(model, InverseSquare3D):
        lk = lk + model.a / rx**2 * k0
    if isinstance(model, AharonovBohm2D):
        a_vec = model.alpha_flux * np.array([-x[1], x[0]]) / rx**2
        grad = np.array([(vals[1 + 2 * i] - vals[2 + 2 * i]) / (2.0 * h) for i in range(2)])
        lk = lk - 2j * (a_vec[0] * grad[0] + a_vec[1] * grad[1]) + (a_vec @ a_vec) * k0
    return float(abs(lk - ny**2 * k0) / (ny**2 * abs(k0) + 1e-300))
