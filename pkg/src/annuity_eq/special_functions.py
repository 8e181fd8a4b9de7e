"""Principal branch of the Lambert W function.

``lambert_w0(z)`` inverts ``w * exp(w)`` on ``[-1/e, inf)``.
``lambert_w0_of_log(y)`` returns ``W(exp(y))`` without forming ``exp(y)``,
which is what the equilibrium recursion needs: its arguments come as
``exp(affine expression)`` and can overflow long before ``W`` does.

Both accept scalars or arrays.
"""

import math

import numpy as np

from ._accel import njit, use_numba

__all__ = ["LambertDomainError", "lambert_w0", "lambert_w0_of_log", "lambert_w0_derivative"]

# 1/e split into a double and its rounding error so that z + 1/e keeps
# its low-order bits near the branch point.
_EM1_HI = 0.36787944117144233
_EM1_LO = -1.2428753672788363e-17
# z this far below float(-1/e) is still treated as the branch point.
_DOMAIN_SLACK = 4e-17
_NEAR_BRANCH = 1e-9
_MAX_ITER = 50
_STEP_TOL = 1e-15


class LambertDomainError(ValueError):
    def __init__(self, z):
        super().__init__(f"lambert_w0 is undefined for z={z!r} < -1/e")
        self.z = z


# ---------------------------------------------------------------------------
# scalar kernels (numba)
# ---------------------------------------------------------------------------

@njit(cache=True)
def _branch_series(p):
    # W near -1/e in powers of p = sqrt(2 (e z + 1))
    return -1.0 + p * (1.0 + p * (-1.0 / 3.0 + p * (11.0 / 72.0 + p * (-43.0 / 540.0))))


@njit(cache=True)
def _w0_log_large(y):
    # y > 1, so w > 1. Newton on w + ln w = y.
    if y < 3.0:
        w = 1.0 + 0.5 * (y - 1.0)
    else:
        ly = math.log(y)
        w = y - ly + ly / y
    for _ in range(_MAX_ITER):
        w_new = (1.0 + y - math.log(w)) / (1.0 + 1.0 / w)
        step = w_new - w
        w = w_new
        if abs(step) <= _STEP_TOL * max(1.0, abs(w)):
            break
    return w


@njit(cache=True)
def _w0_scalar(z):
    if z == 0.0:
        return 0.0
    if z > math.e:
        return _w0_log_large(math.log(z))
    dz = (z + _EM1_HI) + _EM1_LO
    if dz <= 0.0:
        return -1.0
    p = math.sqrt(2.0 * math.e * dz)
    if dz < _NEAR_BRANCH:
        return _branch_series(p)
    if dz < 0.25:
        w = _branch_series(p)
    else:
        w = math.log1p(z)
    for _ in range(_MAX_ITER):
        ew = math.exp(w)
        f = w * ew - z
        wp1 = w + 1.0
        step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1))
        w -= step
        if abs(step) <= _STEP_TOL * max(1.0, abs(w)):
            break
    return w


@njit(cache=True)
def _w0_of_log_scalar(y):
    if y > 1.0:
        return _w0_log_large(y)
    if y < -745.0:
        # exp underflows; W(z) ~ z there
        return math.exp(y)
    return _w0_scalar(math.exp(y))


@njit(cache=True)
def _w0_array(z):
    out = np.empty(z.size)
    for n in range(z.size):
        out[n] = _w0_scalar(z[n])
    return out


@njit(cache=True)
def _w0_of_log_array(y):
    out = np.empty(y.size)
    for n in range(y.size):
        out[n] = _w0_of_log_scalar(y[n])
    return out


# ---------------------------------------------------------------------------
# vectorised numpy kernels
# ---------------------------------------------------------------------------

def _np_log_large(y):
    w = np.where(y < 3.0, 1.0 + 0.5 * (y - 1.0), 0.0)
    big = y >= 3.0
    ly = np.log(y[big])
    w[big] = y[big] - ly + ly / y[big]
    active = np.ones(y.shape, dtype=bool)
    for _ in range(_MAX_ITER):
        if not active.any():
            break
        wa, ya = w[active], y[active]
        w_new = (1.0 + ya - np.log(wa)) / (1.0 + 1.0 / wa)
        done = np.abs(w_new - wa) <= _STEP_TOL * np.maximum(1.0, np.abs(w_new))
        w[active] = w_new
        idx = np.flatnonzero(active)
        active[idx[done]] = False
    return w


def _np_w0(z):
    z = np.asarray(z, dtype=float)
    out = np.zeros(z.shape)
    large = z > math.e
    if large.any():
        out[large] = _np_log_large(np.log(z[large]))
    rest = ~large & (z != 0.0)
    if not rest.any():
        return out
    zr = z[rest]
    dz = (zr + _EM1_HI) + _EM1_LO
    p = np.sqrt(2.0 * math.e * np.maximum(dz, 0.0))
    series = _branch_series_np(p)
    w = np.where(dz < 0.25, series, np.log1p(np.maximum(zr, -0.99)))
    fixed = dz < _NEAR_BRANCH
    w[fixed] = np.where(dz[fixed] <= 0.0, -1.0, series[fixed])
    active = ~fixed
    for _ in range(_MAX_ITER):
        if not active.any():
            break
        wa, za = w[active], zr[active]
        ew = np.exp(wa)
        f = wa * ew - za
        wp1 = wa + 1.0
        step = f / (ew * wp1 - (wa + 2.0) * f / (2.0 * wp1))
        wa = wa - step
        w[active] = wa
        done = np.abs(step) <= _STEP_TOL * np.maximum(1.0, np.abs(wa))
        idx = np.flatnonzero(active)
        active[idx[done]] = False
    out[rest] = w
    return out


def _branch_series_np(p):
    return -1.0 + p * (1.0 + p * (-1.0 / 3.0 + p * (11.0 / 72.0 + p * (-43.0 / 540.0))))


def _np_w0_of_log(y):
    y = np.asarray(y, dtype=float)
    out = np.empty(y.shape)
    large = y > 1.0
    tiny = y < -745.0
    mid = ~large & ~tiny
    if large.any():
        out[large] = _np_log_large(y[large])
    out[tiny] = np.exp(y[tiny])
    if mid.any():
        out[mid] = _np_w0(np.exp(y[mid]))
    return out


# ---------------------------------------------------------------------------
# public surface
# ---------------------------------------------------------------------------

def _check_domain(z):
    zmin = np.min(z) if np.ndim(z) else z
    if zmin < -(_EM1_HI + _EM1_LO) - _DOMAIN_SLACK or np.isnan(zmin):
        if np.ndim(z):
            bad = np.asarray(z)
            zmin = float(bad[np.isnan(bad) | (bad < -_EM1_HI)][0])
        raise LambertDomainError(float(zmin))


def lambert_w0(z):
    """Principal branch W0(z), the w >= -1 solving ``w * exp(w) = z``.

    Raises LambertDomainError for z < -1/e.
    """
    if np.ndim(z) == 0:
        z = float(z)
        _check_domain(z)
        return float(_w0_scalar(z)) if use_numba() else float(_np_w0(np.array([z]))[0])
    arr = np.asarray(z, dtype=float)
    if arr.size == 0:
        return np.empty(arr.shape)
    _check_domain(arr)
    flat = np.ascontiguousarray(arr.ravel())
    res = _w0_array(flat) if use_numba() else _np_w0(flat)
    return res.reshape(arr.shape)


def lambert_w0_of_log(y):
    """``W0(exp(y))`` evaluated without forming ``exp(y)``.

    For large y this is the w > 0 with ``w + log(w) = y``; for very negative
    y it is ``exp(y)`` to working precision.
    """
    if np.ndim(y) == 0:
        y = float(y)
        return float(_w0_of_log_scalar(y)) if use_numba() else float(_np_w0_of_log(np.array([y]))[0])
    arr = np.asarray(y, dtype=float)
    flat = np.ascontiguousarray(arr.ravel())
    res = _w0_of_log_array(flat) if use_numba() else _np_w0_of_log(flat)
    return res.reshape(arr.shape)


def lambert_w0_derivative(z):
    """dW/dz = W / (z (1 + W)), with the z = 0 limit 1."""
    w = lambert_w0(z)
    z = np.asarray(z, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        d = np.where(z == 0.0, 1.0, w / (z * (1.0 + w)))
    return float(d) if d.ndim == 0 else d
