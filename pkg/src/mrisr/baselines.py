"""Interpolation baselines: grid-aligned trilinear and cubic B-spline.

Both upsamplers map output index i to input coordinate i / factor,
anchored at index 0 to match the decimation phase, so degrade followed
by upsample is phase-aligned. Trilinear clamps at the far edge; the
B-spline path uses mirror extension consistent with its prefilter.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ParameterError
from .volume import Volume

# Pole of the cubic B-spline direct filter; |z| < 1.
_BSPLINE_POLE = math.sqrt(3.0) - 2.0


def _linear_interp_axis(arr: np.ndarray, factor: int, axis: int) -> np.ndarray:
    n = arr.shape[axis]
    coords = np.arange(n * factor, dtype=np.float64) / factor
    i0 = np.minimum(np.floor(coords).astype(np.int64), n - 1)
    i1 = np.minimum(i0 + 1, n - 1)
    w = coords - i0
    x = np.moveaxis(arr, axis, 0)
    shape_tail = (slice(None),) + (None,) * (x.ndim - 1)
    out = x[i0] * (1.0 - w)[shape_tail] + x[i1] * w[shape_tail]
    return np.moveaxis(out, 0, axis)


def trilinear_resize(arr: np.ndarray, factors) -> np.ndarray:
    """Separable linear upsampling of a 3D array by integer factors."""
    out = np.asarray(arr, dtype=np.float64)
    for axis, f in enumerate(factors):
        f = int(f)
        if f < 1:
            raise ParameterError(f"upsampling factors must be >= 1, got {factors}")
        if f > 1:
            out = _linear_interp_axis(out, f, axis)
    return out


def upsample_trilinear(v: Volume, factors) -> Volume:
    """Trilinear upsampling of a volume; spacing divides by the factors."""
    data = trilinear_resize(v.data, factors)
    spacing = tuple(s / int(f) for s, f in zip(v.spacing, factors))
    return v.with_data(data, spacing=spacing)


def _mirror_index(i: np.ndarray, n: int) -> np.ndarray:
    """Whole-sample mirror extension index (period 2n - 2)."""
    if n == 1:
        return np.zeros_like(i)
    period = 2 * n - 2
    i = np.abs(i) % period
    return np.where(i >= n, period - i, i)


def bspline_prefilter1d(arr: np.ndarray, axis: int) -> np.ndarray:
    """Recursive cubic B-spline coefficient filter with mirror boundaries.

    After filtering, evaluating the cubic B-spline expansion at the
    grid points reproduces the original samples (exactly, up to a
    truncation of 1e-12 in the causal init).
    """
    x = np.moveaxis(np.asarray(arr, dtype=np.float64), axis, 0)
    n = x.shape[0]
    if n < 4:
        raise ParameterError(f"B-spline prefilter needs axis length >= 4, got {n}")
    z = _BSPLINE_POLE
    c = x * 6.0
    # Causal init: infinite sum over the mirror-extended signal,
    # truncated once |z|^k drops below 1e-12.
    horizon = int(math.ceil(math.log(1e-12) / math.log(abs(z)))) + 1
    cp = np.empty_like(c)
    cp[0] = c[0]
    for k in range(1, horizon):
        cp[0] += z ** k * c[int(_mirror_index(np.int64(k), n))]
    for i in range(1, n):
        cp[i] = c[i] + z * cp[i - 1]
    out = np.empty_like(c)
    out[n - 1] = (z / (z * z - 1.0)) * (cp[n - 1] + z * cp[n - 2])
    for i in range(n - 2, -1, -1):
        out[i] = z * (out[i + 1] - cp[i])
    return np.moveaxis(out, 0, axis)


def _bspline_weights(u: np.ndarray):
    u2 = u * u
    u3 = u2 * u
    w0 = (1.0 - 3.0 * u + 3.0 * u2 - u3) / 6.0
    w1 = (4.0 - 6.0 * u2 + 3.0 * u3) / 6.0
    w2 = (1.0 + 3.0 * u + 3.0 * u2 - 3.0 * u3) / 6.0
    w3 = u3 / 6.0
    return w0, w1, w2, w3


def _bspline_eval_axis(coeffs: np.ndarray, factor: int, axis: int) -> np.ndarray:
    n = coeffs.shape[axis]
    coords = np.arange(n * factor, dtype=np.float64) / factor
    base = np.floor(coords).astype(np.int64)
    u = coords - base
    weights = _bspline_weights(u)
    c = np.moveaxis(coeffs, axis, 0)
    out = np.zeros((coords.size,) + c.shape[1:])
    tail = (slice(None),) + (None,) * (c.ndim - 1)
    for k, w in enumerate(weights):
        idx = _mirror_index(base + k - 1, n)
        out += w[tail] * c[idx]
    return np.moveaxis(out, 0, axis)


def bspline_resize(arr: np.ndarray, factors) -> np.ndarray:
    """Cubic B-spline upsampling: prefilter per axis, then evaluate at i/f."""
    out = np.asarray(arr, dtype=np.float64)
    for axis, f in enumerate(factors):
        f = int(f)
        if f < 1:
            raise ParameterError(f"upsampling factors must be >= 1, got {factors}")
        if f > 1:
            out = bspline_prefilter1d(out, axis)
            out = _bspline_eval_axis(out, f, axis)
    return out


def upsample_bspline(v: Volume, factors) -> Volume:
    """Interpolating cubic B-spline upsampling of a volume."""
    for axis, f in enumerate(factors):
        if int(f) > 1 and v.dims[axis] < 4:
            raise ParameterError(f"axis {axis} length {v.dims[axis]} < 4, too short for cubic B-spline")
    data = bspline_resize(v.data, factors)
    spacing = tuple(s / int(f) for s, f in zip(v.spacing, factors))
    return v.with_data(data, spacing=spacing)


def nearest_resize(arr: np.ndarray, factors) -> np.ndarray:
    """Pixel replication (the no-interpolation baseline)."""
    out = np.asarray(arr, dtype=np.float64)
    for axis, f in enumerate(factors):
        f = int(f)
        if f > 1:
            out = np.repeat(out, f, axis=axis)
    return out


def upsample_nearest(v: Volume, factors) -> Volume:
    data = nearest_resize(v.data, factors)
    spacing = tuple(s / int(f) for s, f in zip(v.spacing, factors))
    return v.with_data(data, spacing=spacing)
