"""3D convolution and transposed-convolution layers with exact gradients.

Tensors are plain numpy arrays of shape (channels, dx, dy, dz). All
convolutions are cross-correlations with mirror (whole-sample reflect)
padding, so spatial dims are preserved; transposed convolutions insert
stride-1 zeros between samples along one in-plane axis before the same
padded correlation, growing that axis by the stride. Backward passes
are the exact adjoints of each forward step, including the mirror-pad
fold and the zero-insertion, so analytic gradients match finite
differences to float precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ParameterError, ShapeError

# Below this im2col size (elements), one flattened matmul beats the
# per-offset loop; above it, cache-friendly small matmuls win.
_IM2COL_ELEMENT_LIMIT = 1 << 19


def _check_tensor(x: np.ndarray):
    if x.ndim != 4 or any(n < 1 for n in x.shape):
        raise ShapeError(f"expected a (c, dx, dy, dz) tensor, got shape {getattr(x, 'shape', None)}")


def mirror_pad(x: np.ndarray, pads: tuple[int, int, int]) -> np.ndarray:
    """Pad the three spatial axes by whole-sample reflection."""
    for axis, p in enumerate(pads, start=1):
        if p > 0:
            idx = np.pad(np.arange(x.shape[axis]), p, mode="reflect")
            x = np.take(x, idx, axis=axis)
    return x


def mirror_fold(g: np.ndarray, pads: tuple[int, int, int]) -> np.ndarray:
    """Adjoint of :func:`mirror_pad`: fold padded borders onto their sources."""
    for axis, p in enumerate(pads, start=1):
        if p == 0:
            continue
        n = g.shape[axis] - 2 * p
        idx = np.pad(np.arange(n), p, mode="reflect")
        gm = np.moveaxis(g, axis, 0)
        core = gm[p:p + n].copy()
        for i in range(p):
            core[idx[i]] += gm[i]
            core[idx[-(i + 1)]] += gm[-(i + 1)]
        g = np.moveaxis(core, 0, axis)
    return g


def _corr3d(xp: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Valid cross-correlation of a padded (ci, px, py, pz) tensor."""
    co, ci, kx, ky, kz = w.shape
    dx = xp.shape[1] - kx + 1
    dy = xp.shape[2] - ky + 1
    dz = xp.shape[3] - kz + 1
    n = dx * dy * dz
    dtype = np.result_type(xp.dtype, w.dtype)
    if ci * kx * ky * kz * n <= _IM2COL_ELEMENT_LIMIT:
        win = np.lib.stride_tricks.sliding_window_view(xp, (kx, ky, kz), axis=(1, 2, 3))
        cols = win.transpose(0, 4, 5, 6, 1, 2, 3).reshape(ci * kx * ky * kz, n)
        out = w.reshape(co, -1).astype(dtype, copy=False) @ cols.astype(dtype, copy=False)
    else:
        out = np.zeros((co, n), dtype=dtype)
        wm = w.reshape(co, ci, -1)
        t = 0
        for a in range(kx):
            for b in range(ky):
                for c in range(kz):
                    xs = xp[:, a:a + dx, b:b + dy, c:c + dz].reshape(ci, n)
                    out += wm[:, :, t] @ xs
                    t += 1
    return out.reshape(co, dx, dy, dz)


def _corr3d_input_grad(g_out: np.ndarray, w: np.ndarray, padded_shape) -> np.ndarray:
    co, ci, kx, ky, kz = w.shape
    _, dx, dy, dz = g_out.shape
    n = dx * dy * dz
    g_mat = g_out.reshape(co, n)
    g_pad = np.zeros(padded_shape, dtype=g_out.dtype)
    wm = w.reshape(co, ci, -1)
    t = 0
    for a in range(kx):
        for b in range(ky):
            for c in range(kz):
                g_pad[:, a:a + dx, b:b + dy, c:c + dz] += (wm[:, :, t].T @ g_mat).reshape(ci, dx, dy, dz)
                t += 1
    return g_pad


def _corr3d_weight_grad(xp: np.ndarray, g_out: np.ndarray, kshape) -> np.ndarray:
    kx, ky, kz = kshape
    ci = xp.shape[0]
    co, dx, dy, dz = g_out.shape
    n = dx * dy * dz
    g_mat = g_out.reshape(co, n)
    g_w = np.empty((co, ci, kx, ky, kz), dtype=g_out.dtype)
    for a in range(kx):
        for b in range(ky):
            for c in range(kz):
                xs = xp[:, a:a + dx, b:b + dy, c:c + dz].reshape(ci, n)
                g_w[:, :, a, b, c] = g_mat @ xs.T
    return g_w


@dataclass
class ConvSpec:
    """3x3x3 convolution layer parameters."""

    in_channels: int
    out_channels: int
    weights: np.ndarray  # (out, in, 3, 3, 3)
    biases: np.ndarray  # (out,)

    def __post_init__(self):
        expected = (self.out_channels, self.in_channels, 3, 3, 3)
        if self.weights.shape != expected:
            raise ShapeError(f"conv weights must be {expected}, got {self.weights.shape}")
        if self.biases.shape != (self.out_channels,):
            raise ShapeError(f"conv biases must be ({self.out_channels},), got {self.biases.shape}")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.biases))):
            raise ParameterError("conv parameters must be finite")


@dataclass
class TConvSpec:
    """Transposed convolution upsampling one in-plane axis by ``stride``.

    The kernel spans 2 * stride + 1 taps along the upsampled axis and 3
    along the other two.
    """

    in_channels: int
    out_channels: int
    axis: str  # "x" or "y"
    stride: int
    weights: np.ndarray
    biases: np.ndarray

    def __post_init__(self):
        if self.axis not in ("x", "y"):
            raise ParameterError(f"tconv axis must be 'x' or 'y', got {self.axis!r}")
        if self.stride not in (2, 4):
            raise ParameterError(f"tconv stride must be 2 or 4, got {self.stride}")
        k = 2 * self.stride + 1
        expected = (
            (self.out_channels, self.in_channels, k, 3, 3)
            if self.axis == "x"
            else (self.out_channels, self.in_channels, 3, k, 3)
        )
        if self.weights.shape != expected:
            raise ShapeError(f"tconv weights must be {expected}, got {self.weights.shape}")
        if self.biases.shape != (self.out_channels,):
            raise ShapeError(f"tconv biases must be ({self.out_channels},), got {self.biases.shape}")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.biases))):
            raise ParameterError("tconv parameters must be finite")

    @property
    def spatial_axis(self) -> int:
        return 1 if self.axis == "x" else 2

    @property
    def pads(self) -> tuple[int, int, int]:
        return (self.stride, 1, 1) if self.axis == "x" else (1, self.stride, 1)


def conv3d_forward(x: np.ndarray, spec: ConvSpec) -> np.ndarray:
    """Mirror-padded 3x3x3 correlation; spatial shape is preserved."""
    _check_tensor(x)
    if x.shape[0] != spec.in_channels:
        raise ShapeError(f"input has {x.shape[0]} channels, layer expects {spec.in_channels}")
    xp = mirror_pad(x, (1, 1, 1))
    out = _corr3d(xp, spec.weights)
    return out + spec.biases.reshape(-1, 1, 1, 1)


def conv3d_backward(x: np.ndarray, spec: ConvSpec, g_out: np.ndarray, need_input_grad=True):
    """Gradients of :func:`conv3d_forward`: (g_x, g_weights, g_biases)."""
    if g_out.shape != (spec.out_channels,) + x.shape[1:]:
        raise ShapeError(f"output gradient shape {g_out.shape} does not match layer output")
    xp = mirror_pad(x, (1, 1, 1))
    g_w = _corr3d_weight_grad(xp, g_out, (3, 3, 3))
    g_b = g_out.sum(axis=(1, 2, 3))
    g_x = None
    if need_input_grad:
        g_x = mirror_fold(_corr3d_input_grad(g_out, spec.weights, xp.shape), (1, 1, 1))
    return g_x, g_w, g_b


def _zero_stuff(x: np.ndarray, axis: int, stride: int) -> np.ndarray:
    shape = list(x.shape)
    shape[axis] *= stride
    out = np.zeros(shape, dtype=x.dtype)
    sl = [slice(None)] * x.ndim
    sl[axis] = slice(None, None, stride)
    out[tuple(sl)] = x
    return out


def tconv3d_forward(x: np.ndarray, spec: TConvSpec) -> np.ndarray:
    """(x upsampled-by-zero-insertion) correlated with the kernel.

    The upsampled axis grows by exactly ``stride``; the other dims are
    preserved.
    """
    _check_tensor(x)
    if x.shape[0] != spec.in_channels:
        raise ShapeError(f"input has {x.shape[0]} channels, layer expects {spec.in_channels}")
    stuffed = _zero_stuff(x, spec.spatial_axis, spec.stride)
    xp = mirror_pad(stuffed, spec.pads)
    out = _corr3d(xp, spec.weights)
    return out + spec.biases.reshape(-1, 1, 1, 1)


def tconv3d_backward(x: np.ndarray, spec: TConvSpec, g_out: np.ndarray, need_input_grad=True):
    """Gradients of :func:`tconv3d_forward`: (g_x, g_weights, g_biases)."""
    stuffed = _zero_stuff(x, spec.spatial_axis, spec.stride)
    if g_out.shape != (spec.out_channels,) + stuffed.shape[1:]:
        raise ShapeError(f"output gradient shape {g_out.shape} does not match layer output")
    xp = mirror_pad(stuffed, spec.pads)
    g_w = _corr3d_weight_grad(xp, g_out, spec.weights.shape[2:])
    g_b = g_out.sum(axis=(1, 2, 3))
    g_x = None
    if need_input_grad:
        g_stuffed = mirror_fold(_corr3d_input_grad(g_out, spec.weights, xp.shape), spec.pads)
        sl = [slice(None)] * 4
        sl[spec.spatial_axis] = slice(None, None, spec.stride)
        g_x = g_stuffed[tuple(sl)]
    return g_x, g_w, g_b


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(pre: np.ndarray, g: np.ndarray) -> np.ndarray:
    # Subgradient at 0 is defined as 0.
    return g * (pre > 0)


def residual_add(x: np.ndarray, skip: np.ndarray) -> np.ndarray:
    if x.shape != skip.shape:
        raise ShapeError(f"residual shapes differ: {x.shape} vs {skip.shape}")
    return x + skip
