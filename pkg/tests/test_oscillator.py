import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from singflow.angular import AharonovBohm2D, FreeN, InverseSquare3D, eigenfunction
from singflow.datum import mode_datum, natural_gaussian_datum, gaussian_ring_datum
from singflow.errors import DomainError
from singflow.oscillator import OscillatorBasis
from singflow.quadrature import panel_rule, sphere_rule


def radial_rule(r_max=30.0, h=0.05, order=16):
    edges = np.concatenate([[0.0], np.geomspace(1e-10, h, 30), np.arange(2 * h, r_max + h / 2, h)])
    return panel_rule(edges, order)


def first_modes(basis, count):
    return [(m, k) for _, m, k in basis.spectrum(1e9)[:count]]


def test_free_spectrum_is_harmonic_oscillator():
    basis = OscillatorBasis(FreeN(3), m_max=10, k_max=121)
    levels = Counter()
    for gam, m, k in basis.spectrum(3 / 2 + 8):
        levels[gam] += 1
    for n in range(9):
        assert levels[1.5 + n] == (n + 1) * (n + 2) // 2
    assert set(levels) == {1.5 + n for n in range(9)}


def test_gram_by_independent_quadrature():
    model = InverseSquare3D(2.0)
    basis = OscillatorBasis(model, m_max=10, k_max=16)
    modes = first_modes(basis, 15)
    r, wr = radial_rule()
    th, wt = sphere_rule(3, 16)
    vals = []
    for m, k in modes:
        rad = basis.radial(k, r, m_max=m)[m]
        ang = eigenfunction(model, basis.pairs[k - 1], th)
        vals.append((rad, ang))
    G = np.empty((15, 15), dtype=complex)
    for i, (ri, ai) in enumerate(vals):
        for j, (rj, aj) in enumerate(vals):
            G[i, j] = (ri * rj * wr * r**2).sum() * (ai * np.conj(aj) * wt).sum()
    assert np.abs(G - np.eye(15)).max() < 1e-8
    assert np.abs(basis.gram(modes) - np.eye(15)).max() < 1e-12


@pytest.mark.parametrize("model", [InverseSquare3D(2.0), InverseSquare3D(-3 / 16), AharonovBohm2D(0.3)])
def test_norm_formula_against_quadrature(model):
    basis = OscillatorBasis(model, m_max=12, k_max=4)
    r, w = radial_rule()
    n = model.dim
    for k in (1, 2, 4):
        for m in (0, 3, 12):
            v = basis.eigenfunction_radial(m, k, r)
            quad = (v * v * w * r ** (n - 1)).sum()
            assert quad == pytest.approx(basis.norm2(m, k), rel=1e-10)


@settings(max_examples=40, deadline=None)
@given(a=st.floats(-0.24, 20.0), m=st.integers(0, 15), k=st.integers(1, 9), r=st.floats(0.3, 6.0))
def test_radial_ode_residual(a, m, k, r):
    model = InverseSquare3D(a)
    basis = OscillatorBasis(model, m_max=16, k_max=9)
    p = basis.pairs[k - 1]
    h = 1e-3
    f = [basis.eigenfunction_radial(m, k, r + j * h) for j in (-2, -1, 0, 1, 2)]
    d1 = (f[0] - 8 * f[1] + 8 * f[3] - f[4]) / (12 * h)
    d2 = (-f[0] + 16 * f[1] - 30 * f[2] + 16 * f[3] - f[4]) / (12 * h * h)
    lhs = -d2 - 2.0 / r * d1 + p.mu / r**2 * f[2] + r * r / 4 * f[2]
    rhs = basis.eigenvalue(m, k) * f[2]
    scale = max(abs(d2), abs(rhs), abs(r * r / 4 * f[2]), abs(p.mu / r**2 * f[2]))
    assert abs(lhs - rhs) <= 1e-6 * scale


def test_eigenvalue_form():
    basis = OscillatorBasis(InverseSquare3D(2.0), m_max=5, k_max=3)
    p = basis.pairs[0]
    assert basis.eigenvalue(2, 1) == pytest.approx(4 + p.beta + 1)


def test_natural_gaussian_coefficients_are_geometric():
    w = 0.7
    for model in (InverseSquare3D(2.0), AharonovBohm2D(0.3)):
        basis = OscillatorBasis(model, m_max=30, k_max=1)
        exp = basis.expand_datum(natural_gaussian_datum(model, w))
        c = np.abs(next(iter(exp.coeffs.values())))
        beta = basis.pairs[0].beta
        m = np.arange(12)
        # geometric on the plain Laguerre functions; the rest is normalisation
        expect = (1 - w * w) / (1 + w * w) * np.sqrt((m + beta + 1) / (m + 1))
        assert np.allclose(c[1:13] / c[:12], expect, rtol=1e-10)
        assert exp.captured == pytest.approx(1.0, abs=1e-12)


def test_mode_datum_projects_to_unit_vector():
    model = InverseSquare3D(2.0)
    basis = OscillatorBasis(model, m_max=20, k_max=4)
    label = basis.pairs[2].label
    exp = basis.expand_datum(mode_datum(basis, 5, label))
    c = exp.coeffs[label]
    assert abs(c[5]) == pytest.approx(1.0, abs=1e-12)
    assert np.abs(np.delete(c, 5)).max() < 1e-12


def test_under_resolution_is_reported():
    model = InverseSquare3D(2.0)
    datum = gaussian_ring_datum(model, 4.0, 0.2)
    exp = OscillatorBasis(model, m_max=8, k_max=1).expand_datum(datum)
    assert exp.warning and exp.captured < 0.999
    full = OscillatorBasis(model, m_max=120, k_max=1).expand_datum(datum)
    assert full.captured > exp.captured


def test_basis_rejects_bad_sizes():
    with pytest.raises(DomainError):
        OscillatorBasis(FreeN(3), m_max=-1)
    basis = OscillatorBasis(FreeN(3), m_max=3, k_max=4)
    with pytest.raises(DomainError):
        basis.pair_for((3, 0))
