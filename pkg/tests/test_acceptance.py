"""Acceptance suite: one pass/fail line per criterion, at the stated tolerances.

Each test records a ``[PASS]`` or ``[FAIL]`` line (shown in the terminal
summary) before asserting, so a failing criterion still reports its numbers.
"""

import math
import os
import subprocess
import sys
import time
from collections import Counter

import mpmath
import numpy as np
import pytest
from scipy.special import roots_genlaguerre

from singflow.angular import AharonovBohm2D, FreeN, InverseSquare3D, eigenfunction, weyl_check
from singflow.cli import free_sample_pairs
from singflow.datum import gaussian_datum, gaussian_ring_datum, natural_gaussian_datum
from singflow.decay import fit_decay, kernel_sup_scan
from singflow.kernel import KernelEvaluator, free_kernel, kernel_eigen_residual, kernel_eval
from singflow.oscillator import OscillatorBasis
from singflow.propagator import channel_profiles, free_gaussian_solution, propagate
from singflow.quadrature import panel_rule, sphere_rule
from singflow.specfun import bessel_j, bessel_j_oracle, binom, kummer_m, laguerre, lgamma


def report(acceptance, ok, n, name, detail):
    acceptance("[%s] %s %s: %s" % ("PASS" if ok else "FAIL", n, name, detail))
    assert ok, detail


# ---------------------------------------------------------------- 1

def test_1_free_kernel(acceptance):
    t0 = time.perf_counter()
    x, y = free_sample_pairs(3, 200, 8.0)
    ev = KernelEvaluator(FreeN(3), k_max=61 * 61, series=True)
    res = kernel_eval(ev, x, y, full_output=True)
    err = float(np.abs(res.value - free_kernel(x, y, 3)).max())
    dt = time.perf_counter() - t0
    ok = err <= 1e-6 and dt < 10 and bool(res.ok.all())
    report(acceptance, ok, 1, "free kernel", "max err %.2e over 200 pairs, l <= 60, %.2f s" % (err, dt))


# ---------------------------------------------------------------- 2

def test_2_special_functions(acceptance):
    nus = np.linspace(0.0, 30.0, 61)
    xs = np.linspace(0.0, 20.0, 81)
    N, X = np.meshgrid(nus, xs, indexing="ij")
    got = bessel_j(N, X)
    ref = np.array([[float(mpmath.besselj(n, x)) for x in xs] for n in nus])
    e_bes = float(np.abs(got - ref).max())
    e_orc = float(np.abs(np.vectorize(bessel_j_oracle)(N, X) - ref).max())

    e_gram = 0.0
    for a in (0.5, 1.5, 3.0):
        t, w = roots_genlaguerre(40, a)
        L = np.array([laguerre(m, a, t) for m in range(11)])
        norms = np.exp(0.5 * np.array([lgamma(m + a + 1) - lgamma(m + 1.0) for m in range(11)]))
        G = (L * w) @ L.T / np.outer(norms, norms)
        e_gram = max(e_gram, float(np.abs(G - np.eye(11)).max()))

    e_kum = 0.0
    for m in range(0, 21):
        for a in (0.0, 0.5, 1.5, 3.0, 7.25):
            for t in np.linspace(0.0, 30.0, 31):
                lag = laguerre(m, a, t)
                km = binom(m + a, m) * kummer_m(-m, a + 1.0, t)
                e_kum = max(e_kum, abs(lag - km) / max(1.0, abs(lag)))

    ok = e_bes <= 1e-10 and e_orc <= 1e-10 and e_gram <= 1e-10 and e_kum <= 1e-12
    report(
        acceptance, ok, 2, "special functions",
        "bessel %.1e (oracle %.1e), Laguerre Gram %.1e, Kummer-Laguerre %.1e" % (e_bes, e_orc, e_gram, e_kum),
    )


# ---------------------------------------------------------------- 3

def _radial_rule(r_max=30.0, h=0.05, order=16):
    edges = np.concatenate([[0.0], np.geomspace(1e-10, h, 30), np.arange(2 * h, r_max + h / 2, h)])
    return panel_rule(edges, order)


def test_3_oscillator_basis(acceptance):
    model = InverseSquare3D(2.0)
    basis = OscillatorBasis(model, m_max=10, k_max=16)
    modes = [(m, k) for _, m, k in basis.spectrum(1e9)[:15]]
    r, wr = _radial_rule()
    th, wt = sphere_rule(3, 16)
    vals = [(basis.radial(k, r, m_max=m)[m], eigenfunction(model, basis.pairs[k - 1], th)) for m, k in modes]
    G = np.array([[(ri * rj * wr * r**2).sum() * (ai * np.conj(aj) * wt).sum() for rj, aj in vals] for ri, ai in vals])
    e_gram = float(np.abs(G - np.eye(15)).max())

    e_norm = 0.0
    for k in (1, 2, 5):
        for m in (0, 4, 10):
            v = basis.eigenfunction_radial(m, k, r)
            e_norm = max(e_norm, abs((v * v * wr * r**2).sum() / basis.norm2(m, k) - 1.0))

    e_ode = 0.0
    h = 1e-3
    for m in (0, 3, 8):
        for k in (1, 4, 9):
            p = basis.pairs[k - 1]
            for rr in (0.5, 1.7, 4.0):
                f = [basis.eigenfunction_radial(m, k, rr + j * h) for j in (-2, -1, 0, 1, 2)]
                d1 = (f[0] - 8 * f[1] + 8 * f[3] - f[4]) / (12 * h)
                d2 = (-f[0] + 16 * f[1] - 30 * f[2] + 16 * f[3] - f[4]) / (12 * h * h)
                lhs = -d2 - 2.0 / rr * d1 + (p.mu / rr**2 + rr * rr / 4) * f[2]
                rhs = basis.eigenvalue(m, k) * f[2]
                scale = max(abs(d2), abs(rhs), abs(rr * rr / 4 * f[2]), abs(p.mu / rr**2 * f[2]))
                e_ode = max(e_ode, abs(lhs - rhs) / scale)

    free = OscillatorBasis(FreeN(3), m_max=10, k_max=121)
    levels = Counter(g for g, _, _ in free.spectrum(1.5 + 8))
    harmonic = levels == Counter({1.5 + n: (n + 1) * (n + 2) // 2 for n in range(9)})

    ok = e_gram <= 1e-8 and e_norm <= 1e-10 and e_ode <= 1e-6 and harmonic
    report(
        acceptance, ok, 3, "oscillator basis",
        "Gram %.1e, norm formula %.1e, ODE residual %.1e, harmonic levels %s" % (e_gram, e_norm, e_ode, harmonic),
    )


# ---------------------------------------------------------------- 4

def test_4_propagators(acceptance):
    t0 = time.perf_counter()
    model = InverseSquare3D(2.0)
    ring = gaussian_ring_datum(model, 2.5, 0.5)
    n0 = math.sqrt(ring.norm2())
    worst = drift_eig = drift_ch = 0.0
    for t in (0.5, 1.0, 2.0):
        r_max = math.sqrt(1 + t * t) * (ring.r_supp + 6.0)
        edges = np.concatenate([[0.0], np.geomspace(1e-8, 0.05, 16), np.arange(0.1, r_max + 0.05, 0.05)])
        r, w = panel_rule(edges, 16)
        w = w * r**2
        (ue,) = channel_profiles(ring, t, r, "eigen", m_max=50).values()
        (uc,) = channel_profiles(ring, t, r, "channel").values()
        ne, nc = math.sqrt((np.abs(ue) ** 2 * w).sum()), math.sqrt((np.abs(uc) ** 2 * w).sum())
        worst = max(worst, math.sqrt((np.abs(ue - uc) ** 2 * w).sum()) / nc)
        drift_eig = max(drift_eig, abs(ne - n0) / n0)
        drift_ch = max(drift_ch, abs(nc - n0) / n0)

    x = np.random.default_rng(4).normal(size=(200, 3)) * 2.0
    e_free = 0.0
    for t in (0.5, 1.0, 2.0):
        u = propagate(gaussian_datum(FreeN(3), 1.0), t, x, "eigen").values
        e_free = max(e_free, float(np.abs(u - free_gaussian_solution(3, t, x).values).max()))
    # informational: the channel route carries the support-cut floor
    uc = propagate(gaussian_datum(FreeN(3), 1.0), 1.0, x[:20], "channel").values
    e_free_ch = float(np.abs(uc - free_gaussian_solution(3, 1.0, x[:20]).values).max())
    dt = time.perf_counter() - t0
    ok = worst <= 1e-4 and e_free <= 1e-6 and drift_eig <= 1e-8 and drift_ch <= 1e-4 and dt < 60
    report(
        acceptance, ok, 4, "propagators",
        "ring eigen vs channel rel L2 %.1e, free Gaussian %.1e (channel route %.1e, not gated), "
        "isometry drift %.1e (eigen) %.1e (quadrature), %.1f s" % (worst, e_free, e_free_ch, drift_eig, drift_ch, dt),
    )


# ---------------------------------------------------------------- 5

def test_5_decay_exponents(acceptance):
    t0 = time.perf_counter()
    times = np.geomspace(1.0, 100.0, 9)
    ab = AharonovBohm2D(0.3)
    a2 = InverseSquare3D(2.0)
    am = InverseSquare3D(-3 / 16)
    s_ab = fit_decay(ab, natural_gaussian_datum(ab, 0.5), times).slope
    s_a2 = fit_decay(a2, natural_gaussian_datum(a2, 0.5), times).slope
    s_am = fit_decay(am, natural_gaussian_datum(am, 0.5), times, weighted=True).slope
    s_l2 = max(abs(fit_decay(m, natural_gaussian_datum(m, 0.5), times, p=2).slope) for m in (ab, a2, am))
    dt = time.perf_counter() - t0
    ok = abs(s_ab + 1.0) <= 0.05 and abs(s_a2 + 1.5) <= 0.05 and abs(s_am + 1.25) <= 0.10 and s_l2 <= 1e-3 and dt < 300
    report(
        acceptance, ok, 5, "decay exponents",
        "AB %.4f, a=2 %.4f, a=-3/16 weighted %.4f, max |L2 slope| %.1e, %.1f s" % (s_ab, s_a2, s_am, s_l2, dt),
    )


# ---------------------------------------------------------------- 6

SCAN_R = np.unique(np.concatenate([np.geomspace(1e-6, 1.0, 60), np.linspace(1.0, 50.0, 500)]))


@pytest.fixture(scope="module")
def ab_scan():
    return kernel_sup_scan(KernelEvaluator(AharonovBohm2D(0.3)), SCAN_R, np.linspace(0, 2 * np.pi, 72, endpoint=False))


def test_6_kernel_scans(acceptance, ab_scan):
    q, limit = ab_scan.saturation()
    ab_ok = ab_scan.failed == 0 and math.isfinite(ab_scan.sup) and q < 1 and math.isfinite(limit)

    am = InverseSquare3D(-3 / 16)
    small = kernel_sup_scan(KernelEvaluator(am), np.geomspace(1e-6, 1e-3, 12), np.linspace(-1, 1, 9))
    expo = small.small_r_exponent()

    a2 = kernel_sup_scan(
        KernelEvaluator(InverseSquare3D(2.0), k_max=20000), np.linspace(0.25, 50.0, 200), np.linspace(-1, 1, 25)
    )
    ok = ab_ok and abs(expo + 0.25) <= 0.05 and a2.failed == 0 and math.isfinite(a2.sup)
    report(
        acceptance, ok, 6, "kernel scans",
        "AB sup %.6f, dyadic maxima saturate (ratio %.3f, limit %.6f); a=-3/16 small-r exponent %.5f; a=2 sup %.4f"
        % (ab_scan.sup, q, limit, expo, a2.sup),
    )


@pytest.mark.xfail(strict=True, reason="AB sup over r approaches its limit from below, so the fitted growth is slightly positive")
def test_6_ab_growth_trend_literal(acceptance, ab_scan):
    _, maxima = ab_scan.dyadic_maxima()
    report(
        acceptance, ab_scan.trend <= 0.0, "6b", "AB growth trend <= 0 (known to fail)",
        "log-log trend %+.2e; dyadic maxima %s" % (ab_scan.trend, ", ".join("%.5f" % m for m in maxima)),
    )


# ---------------------------------------------------------------- 7

def test_7_kernel_eigen_residual(acceptance):
    rng = np.random.default_rng(7)
    worst, orders = 0.0, []
    for model in (FreeN(3), InverseSquare3D(2.0)):
        ev = KernelEvaluator(model, series=True)
        for _ in range(10):
            x = rng.normal(size=3)
            x *= rng.uniform(0.6, 2.0) / np.linalg.norm(x)
            y = rng.normal(size=3)
            y *= rng.uniform(0.5, 2.0) / np.linalg.norm(y)
            worst = max(worst, kernel_eigen_residual(ev, y, x, 1e-2))
            res = np.array([kernel_eigen_residual(ev, y, x, h) for h in (0.08, 0.04, 0.02)])
            orders.extend(np.log2(res[:-1] / res[1:]))
    orders = np.array(orders)
    ok = worst <= 1e-3 and np.all(np.abs(orders - 2.0) < 0.3)
    report(
        acceptance, ok, 7, "kernel eigen residual",
        "max residual %.1e at h=1e-2 over 2x10 pairs, observed orders %.2f..%.2f" % (worst, orders.min(), orders.max()),
    )


# ---------------------------------------------------------------- 8

def test_8_weyl(acceptance):
    s_ab = weyl_check(AharonovBohm2D(0.3))["spread"]
    s_is = weyl_check(InverseSquare3D(2.0))["spread"]
    report(acceptance, s_ab <= 0.10 and s_is <= 0.10, 8, "Weyl law", "spread %.4f (AB), %.4f (a=2) over k in [100, 1000]" % (s_ab, s_is))


# ---------------------------------------------------------------- 9

def test_9_determinism(acceptance, tmp_path):
    outs = []
    for threads in (1, 4, 1):
        p = tmp_path / ("free_%d_%d.csv" % (threads, len(outs)))
        env = dict(os.environ, SINGFLOW_THREADS=str(threads))
        subprocess.run([sys.executable, "-m", "singflow.cli", "validate-free", "-o", str(p)], check=True, env=env)
        outs.append(p.read_bytes())
    ok = outs[0] == outs[1] == outs[2]
    report(acceptance, ok, 9, "determinism", "validate-free CSV identical for 1, 4, 1 threads (%d bytes)" % len(outs[0]))
