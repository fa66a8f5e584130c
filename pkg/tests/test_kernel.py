import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from singflow.angular import AharonovBohm2D, FreeN, InverseSquare3D
from singflow.errors import DomainError, TruncationError
from singflow.kernel import (
    KernelEvaluator,
    ab_w,
    free_kernel,
    kernel_ab,
    kernel_eigen_residual,
    kernel_eval,
    kernel_series,
    kernel_zonal,
)


def pairs(dim, n, r_max, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, dim))
    y = rng.normal(size=(n, dim))
    r = r_max * rng.uniform(0.01, 1.0, n)
    scale = np.sqrt(r / (np.linalg.norm(x, axis=1) * np.linalg.norm(y, axis=1)))
    return x * scale[:, None], y * scale[:, None]


@pytest.mark.parametrize("dim", [2, 3])
def test_free_series_matches_closed_form(dim):
    x, y = pairs(dim, 60, 8.0, dim)
    ev = KernelEvaluator(FreeN(dim), tail_tol=1e-14, series=True)
    res = kernel_eval(ev, x, y, full_output=True)
    assert np.abs(res.value - free_kernel(x, y, dim)).max() < 1e-12
    assert res.ok.all()


def test_explicit_series_matches_zonal_form():
    for model in (FreeN(3), InverseSquare3D(2.0), InverseSquare3D(-3 / 16)):
        ev = KernelEvaluator(model, series=True)
        x, y = pairs(3, 20, 10.0, 7)
        assert np.allclose(kernel_series(ev, x, y), kernel_eval(ev, x, y), atol=1e-13)
    ev = KernelEvaluator(AharonovBohm2D(0.3))
    x, y = pairs(2, 20, 10.0, 8)
    assert np.allclose(kernel_series(ev, x, y), kernel_eval(ev, x, y), atol=1e-13)


def test_zero_flux_is_free_plane():
    x, y = pairs(2, 40, 20.0, 3)
    ev = KernelEvaluator(AharonovBohm2D(0.0), tail_tol=1e-14)
    assert np.abs(kernel_eval(ev, x, y) - free_kernel(x, y, 2)).max() < 1e-12


def test_unit_flux_is_gauge_phase():
    x, y = pairs(2, 40, 20.0, 4)
    s = np.arctan2(x[:, 1], x[:, 0]) - np.arctan2(y[:, 1], y[:, 0])
    ev = KernelEvaluator(AharonovBohm2D(1.0), tail_tol=1e-14)
    assert np.abs(kernel_eval(ev, x, y) - np.exp(-1j * s) * free_kernel(x, y, 2)).max() < 1e-12


def test_zero_coupling_is_free_space():
    x, y = pairs(3, 40, 15.0, 5)
    ev = KernelEvaluator(InverseSquare3D(0.0), tail_tol=1e-14)
    assert np.abs(kernel_eval(ev, x, y) - free_kernel(x, y, 3)).max() < 1e-12


def test_ab_w_is_2pi_kernel():
    ev = KernelEvaluator(AharonovBohm2D(0.3))
    z, s = np.array([0.5, 3.0, 12.0]), np.array([0.1, 2.0, -1.0])
    assert np.allclose(ab_w(ev, z, s), 2 * math.pi * kernel_ab(ev, z, s))


@settings(max_examples=30, deadline=None)
@given(r=st.floats(0.01, 20.0), c=st.floats(-1.0, 1.0), tol=st.sampled_from([1e-3, 1e-6, 1e-8]))
def test_tail_bound_covers_truncation_error(r, c, tol):
    model = InverseSquare3D(2.0)
    loose = kernel_zonal(KernelEvaluator(model, tail_tol=tol), r, c, full_output=True)
    tight = kernel_zonal(KernelEvaluator(model, tail_tol=1e-15), r, c)
    assert abs(loose.value - tight) <= loose.tail_bound + 1e-14


@settings(max_examples=30, deadline=None)
@given(z=st.floats(0.01, 30.0), s=st.floats(-math.pi, math.pi), flux=st.floats(-2.0, 2.0))
def test_ab_tail_bound_covers_truncation_error(z, s, flux):
    model = AharonovBohm2D(flux)
    loose = kernel_ab(KernelEvaluator(model, tail_tol=1e-4), z, s, full_output=True)
    tight = kernel_ab(KernelEvaluator(model, tail_tol=1e-15), z, s)
    assert abs(loose.value - tight) <= loose.tail_bound + 1e-14


def test_sphere_scan_range_needs_larger_cap():
    # blocks up to about e*r are needed, each with 2l+1 terms
    r, c = 45.0, 0.3
    with pytest.raises(TruncationError):
        kernel_zonal(KernelEvaluator(InverseSquare3D(2.0)), r, c)
    assert kernel_zonal(KernelEvaluator(InverseSquare3D(2.0), k_max=20000), r, c, full_output=True).ok


def test_truncation_error_carries_partial_sum():
    ev = KernelEvaluator(FreeN(3), k_max=100, series=True)
    with pytest.raises(TruncationError) as info:
        kernel_zonal(ev, 40.0, 0.3)
    assert info.value.terms_used <= 100
    assert info.value.tail_bound > ev.tail_tol
    res = kernel_zonal(ev, np.array([0.5, 40.0]), np.array([0.3, 0.3]), full_output=True, raise_on_fail=False)
    assert list(res.ok) == [True, False]


def test_values_do_not_depend_on_batch():
    ev = KernelEvaluator(InverseSquare3D(2.0))
    r = np.array([0.3, 5.0, 20.0])
    c = np.array([0.2, -0.4, 0.9])
    batch = kernel_zonal(ev, r, c)
    alone = np.array([kernel_zonal(ev, ri, ci) for ri, ci in zip(r, c)])
    assert np.allclose(batch, alone, rtol=0, atol=1e-14)


def test_kernel_symmetric_for_sphere_models():
    ev = KernelEvaluator(InverseSquare3D(-3 / 16))
    x, y = pairs(3, 10, 6.0, 11)
    assert np.allclose(kernel_eval(ev, x, y), kernel_eval(ev, y, x), atol=1e-14)


def test_rotation_invariance():
    rng = np.random.default_rng(2)
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    ev = KernelEvaluator(InverseSquare3D(2.0))
    x, y = pairs(3, 10, 6.0, 12)
    assert np.allclose(kernel_eval(ev, x @ q.T, y @ q.T), kernel_eval(ev, x, y), atol=1e-13)


def test_small_r_power_law():
    # |K| ~ r^{-alpha_1} near r = 0
    ev = KernelEvaluator(InverseSquare3D(-3 / 16))
    r = np.geomspace(1e-8, 1e-5, 5)
    k = np.abs(kernel_zonal(ev, r, np.ones_like(r)))
    slope = np.polyfit(np.log(r), np.log(k), 1)[0]
    assert slope == pytest.approx(-0.25, abs=1e-3)


@pytest.mark.parametrize("model", [FreeN(3), InverseSquare3D(2.0), AharonovBohm2D(0.3)])
def test_eigen_residual_second_order(model):
    ev = KernelEvaluator(model, series=True)
    x = np.array([0.9, -0.4, 0.5][: model.dim])
    y = np.array([0.3, 1.1, -0.7][: model.dim])
    res = [kernel_eigen_residual(ev, y, x, h) for h in (0.1, 0.05, 0.025)]
    orders = np.log2(np.array(res[:-1]) / np.array(res[1:]))
    assert np.all(np.abs(orders - 2.0) < 0.2)
    assert kernel_eigen_residual(ev, y, x, 1e-3) < 1e-5


def test_residual_stencil_must_avoid_origin():
    ev = KernelEvaluator(InverseSquare3D(2.0))
    with pytest.raises(DomainError):
        kernel_eigen_residual(ev, np.ones(3), np.array([1e-4, 0.0, 0.0]), h=1e-3)
