import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from annuity_eq.special_functions import (LambertDomainError, lambert_w0, lambert_w0_derivative,
                                          lambert_w0_of_log)

EM1 = math.exp(-1.0)


def roundtrip_grid(n=10_000):
    neg = np.linspace(-EM1 + 1e-9, 0.0, n // 5, endpoint=False)
    pos = np.logspace(-12, 6, n - neg.size)
    return np.concatenate([neg, pos])


def test_trivial_values(backend):
    assert lambert_w0(0.0) == 0.0
    assert lambert_w0(math.e) == pytest.approx(1.0, abs=1e-15)
    assert lambert_w0(-EM1) == pytest.approx(-1.0, abs=1e-8)


def test_omega_constant(backend, golden_lambert):
    omega = float(golden_lambert["omega"])
    assert abs(lambert_w0(1.0) - omega) <= 1e-12
    assert abs(lambert_w0_of_log(0.0) - omega) <= 1e-12


def test_roundtrip_grid(backend):
    z = roundtrip_grid()
    w = lambert_w0(z)
    err = np.abs(w * np.exp(w) - z) / np.maximum(1.0, np.abs(z))
    assert err.max() <= 1e-13
    assert np.all(w >= -1.0)


def test_monotone_on_grid(backend):
    z = np.sort(roundtrip_grid())
    assert np.all(np.diff(lambert_w0(z)) >= 0.0)


def test_below_branch_point_rejected(backend):
    with pytest.raises(LambertDomainError) as info:
        lambert_w0(-0.5)
    assert info.value.z == -0.5
    with pytest.raises(LambertDomainError):
        lambert_w0(np.array([0.0, -1.0]))
    with pytest.raises(LambertDomainError):
        lambert_w0(float("nan"))


def test_near_branch_point_series(backend):
    for dz in (1e-15, 1e-12, 1e-10, 5e-10):
        z = -EM1 + dz
        w = lambert_w0(z)
        assert -1.0 <= w < -1.0 + 1e-4
        assert abs(w * math.exp(w) - z) <= 1e-13


def test_derivative_matches_finite_difference():
    z = np.linspace(0.1, 100.0, 200)
    h = 1e-6 * z
    fd = (lambert_w0(z + h) - lambert_w0(z - h)) / (2 * h)
    assert np.max(np.abs(lambert_w0_derivative(z) / fd - 1.0)) <= 1e-5


def test_of_log_trivial(backend):
    assert lambert_w0_of_log(1.0) == pytest.approx(1.0, abs=1e-15)


def test_of_log_large_argument(backend, golden_lambert):
    w = lambert_w0_of_log(710.0)
    assert math.isfinite(w) and w > 0
    assert abs(w + math.log(w) - 710.0) <= 1e-10
    assert abs(w - float(golden_lambert["w_of_log_710"])) <= 1e-12 * w
    w_big = lambert_w0_of_log(1e300)
    assert math.isfinite(w_big)


def test_of_log_very_negative(backend):
    for y in (-50.0, -800.0, -1e5):
        assert lambert_w0_of_log(y) == pytest.approx(math.exp(y), rel=1e-12, abs=0.0)


def test_of_log_consistency(backend):
    z = np.logspace(-6, 6, 2001)
    a = lambert_w0_of_log(np.log(z))
    b = lambert_w0(z)
    assert np.max(np.abs(a / b - 1.0)) <= 1e-12


def test_backends_agree():
    from annuity_eq import _accel
    z = roundtrip_grid(2000)
    prev = _accel.set_backend("numpy")
    try:
        a = lambert_w0(z)
    finally:
        _accel.set_backend(prev)
    b = lambert_w0(z)
    assert np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b))) <= 1e-14


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=-EM1 + 1e-12, max_value=1e8, allow_nan=False))
def test_roundtrip_property(z):
    w = lambert_w0(z)
    assert abs(w * math.exp(w) - z) <= 1e-13 * max(1.0, abs(z))


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=-700, max_value=1e6, allow_nan=False),
       st.floats(min_value=1e-3, max_value=10.0))
def test_of_log_monotone_property(y, dy):
    assert lambert_w0_of_log(y) <= lambert_w0_of_log(y + dy)
