"""Quadrature rules: Gauss-Legendre panels and generalised Gauss-Laguerre."""

import math
from functools import lru_cache

import numpy as np
from scipy.special import roots_genlaguerre

from .errors import QuadratureError

__all__ = [
    "gauss_legendre",
    "gauss_laguerre",
    "panel_rule",
    "graded_panels",
    "adaptive_panels",
    "sphere_rule",
]


@lru_cache(maxsize=64)
def _leggauss(n):
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre(n, a=-1.0, b=1.0):
    """``n``-point Gauss-Legendre nodes and weights on ``[a, b]``."""
    x, w = _leggauss(int(n))
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


@lru_cache(maxsize=256)
def _genlaguerre(n, beta):
    x, w = roots_genlaguerre(n, beta)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_laguerre(n, beta, rate=1.0):
    r"""Nodes and weights for :math:`\int_0^\infty t^\beta e^{-\lambda t} f(t)\,dt`.

    Exact for polynomials ``f`` of degree below ``2n``.
    """
    x, w = _genlaguerre(int(n), float(beta))
    return x / rate, w / rate ** (beta + 1.0)


def panel_rule(edges, order=16):
    """Composite Gauss-Legendre rule over consecutive panel ``edges``."""
    edges = np.asarray(edges, dtype=float)
    x, w = _leggauss(order)
    a = edges[:-1, None]
    half = 0.5 * (edges[1:] - edges[:-1])[:, None]
    nodes = a + half * (x[None, :] + 1.0)
    weights = half * w[None, :]
    return nodes.reshape(-1), weights.reshape(-1)


def graded_panels(a, b, h, grade_to_zero=True, levels=12):
    """Uniform panels of width ``<= h`` on ``[a, b]``.

    When ``a == 0`` and ``grade_to_zero`` is set, the first panel is split
    geometrically towards the origin to absorb power-type endpoint
    behaviour.
    """
    n = max(1, int(math.ceil((b - a) / h)))
    edges = np.linspace(a, b, n + 1)
    if a == 0.0 and grade_to_zero and n >= 1:
        first = edges[1]
        inner = first * 0.5 ** np.arange(levels, 0, -1)
        edges = np.concatenate([[0.0], inner, edges[1:]])
    return edges


def adaptive_panels(func, a, b, h, rel_tol=1e-10, order=16, max_halvings=8, abs_floor=0.0):
    """Integrate ``func`` over ``[a, b]``, halving the panel width until stable.

    ``func`` maps a 1-D node array to values of shape ``(..., n_nodes)``; the
    integral is taken over the last axis.  Two consecutive refinements must
    agree to ``rel_tol`` in max norm relative to the largest result.

    Returns
    -------
    estimate, error, panels
    """
    prev = None
    for level in range(max_halvings + 1):
        edges = graded_panels(a, b, h / 2**level)
        nodes, weights = panel_rule(edges, order)
        vals = func(nodes)
        est = (vals * weights).sum(axis=-1)
        if prev is not None:
            err = float(np.max(np.abs(est - prev))) if np.size(est) else 0.0
            scale = float(np.max(np.abs(est))) if np.size(est) else 0.0
            if err <= rel_tol * scale + abs_floor:
                return est, err, len(edges) - 1
        prev = est
    raise QuadratureError(
        "panel refinement did not settle after %d halvings" % max_halvings,
        estimate=est,
        error=err,
        panels=len(edges) - 1,
    )


def sphere_rule(dim, degree):
    """Product rule on the unit circle or 2-sphere, exact to the given degree.

    Returns unit vectors of shape ``(n, dim)`` and weights summing to the
    surface area.
    """
    if dim == 2:
        n = degree + 1
        ph = 2.0 * math.pi * np.arange(n) / n
        return np.stack([np.cos(ph), np.sin(ph)], axis=-1), np.full(n, 2.0 * math.pi / n)
    if dim == 3:
        nu = degree // 2 + 1
        u, wu = _leggauss(nu)
        nphi = degree + 1
        ph = 2.0 * math.pi * np.arange(nphi) / nphi
        uu, pp = np.meshgrid(u, ph, indexing="ij")
        s = np.sqrt(1.0 - uu**2)
        pts = np.stack([s * np.cos(pp), s * np.sin(pp), uu], axis=-1).reshape(-1, 3)
        w = (wu[:, None] * np.full(nphi, 2.0 * math.pi / nphi)[None, :]).reshape(-1)
        return pts, w
    raise ValueError("sphere_rule supports dim 2 and 3")
