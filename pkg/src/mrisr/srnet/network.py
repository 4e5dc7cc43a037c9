"""The fixed nine-layer residual upsampling network.

Wiring: conv1+ReLU; two residual units of two convolutions each
(conv2-3, conv4-5) with identity skips added before each unit's final
ReLU; conv6+ReLU; transposed conv along x, then along y (each +ReLU);
a linear single-channel conv9; and a global residual path that adds
the trilinear upsampling of the input to the conv9 output. With all
parameters zero the network is exactly trilinear upsampling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..baselines import trilinear_resize
from ..errors import ParameterError, ShapeError
from .layers import (
    ConvSpec,
    TConvSpec,
    conv3d_backward,
    conv3d_forward,
    relu,
    relu_backward,
    tconv3d_backward,
    tconv3d_forward,
)

MIN_INPLANE = 8


@dataclass
class NetworkParams:
    """All learnable weights and biases, plus the architecture knobs."""

    factor: int
    width: int
    conv1: ConvSpec
    conv2: ConvSpec
    conv3: ConvSpec
    conv4: ConvSpec
    conv5: ConvSpec
    conv6: ConvSpec
    tconv7: TConvSpec
    tconv8: TConvSpec
    conv9: ConvSpec

    LAYER_NAMES = ("conv1", "conv2", "conv3", "conv4", "conv5", "conv6", "tconv7", "tconv8", "conv9")

    def layers(self):
        return [(name, getattr(self, name)) for name in self.LAYER_NAMES]

    def named_arrays(self):
        for name, spec in self.layers():
            yield f"{name}.weights", spec.weights
            yield f"{name}.biases", spec.biases

    def copy(self) -> "NetworkParams":
        return replace_arrays(self, {k: a.copy() for k, a in self.named_arrays()})

    def astype(self, dtype) -> "NetworkParams":
        return replace_arrays(self, {k: a.astype(dtype) for k, a in self.named_arrays()})

    def n_parameters(self) -> int:
        return sum(a.size for _, a in self.named_arrays())


def replace_arrays(params: NetworkParams, arrays: dict) -> NetworkParams:
    """Rebuild a parameter set with arrays swapped by qualified name."""
    kwargs = {"factor": params.factor, "width": params.width}
    for name, spec in params.layers():
        w = arrays[f"{name}.weights"]
        b = arrays[f"{name}.biases"]
        if isinstance(spec, TConvSpec):
            kwargs[name] = TConvSpec(spec.in_channels, spec.out_channels, spec.axis, spec.stride, w, b)
        else:
            kwargs[name] = ConvSpec(spec.in_channels, spec.out_channels, w, b)
    return NetworkParams(**kwargs)


def _he_uniform(rng, shape, fan_in, dtype):
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def init_params(factor: int = 2, width: int = 32, seed: int = 0, dtype=np.float32, zero: bool = False) -> NetworkParams:
    """He-uniform weights scaled by fan-in, zero biases."""
    if factor not in (2, 4):
        raise ParameterError(f"upsampling factor must be 2 or 4, got {factor}")
    if width < 1:
        raise ParameterError(f"hidden width must be >= 1, got {width}")
    rng = np.random.default_rng(seed)
    k = 2 * factor + 1

    def conv(ci, co):
        shape = (co, ci, 3, 3, 3)
        w = np.zeros(shape, dtype) if zero else _he_uniform(rng, shape, ci * 27, dtype)
        return ConvSpec(ci, co, w, np.zeros(co, dtype))

    def tconv(axis):
        shape = (width, width, k, 3, 3) if axis == "x" else (width, width, 3, k, 3)
        fan_in = width * k * 9
        w = np.zeros(shape, dtype) if zero else _he_uniform(rng, shape, fan_in, dtype)
        return TConvSpec(width, width, axis, factor, w, np.zeros(width, dtype))

    return NetworkParams(
        factor=factor,
        width=width,
        conv1=conv(1, width),
        conv2=conv(width, width),
        conv3=conv(width, width),
        conv4=conv(width, width),
        conv5=conv(width, width),
        conv6=conv(width, width),
        tconv7=tconv("x"),
        tconv8=tconv("y"),
        conv9=conv(width, 1),
    )


def _upsample_input(x: np.ndarray, factor: int) -> np.ndarray:
    return np.stack(
        [trilinear_resize(x[c], (factor, factor, 1)).astype(x.dtype) for c in range(x.shape[0])]
    )


def _forward_cached(params: NetworkParams, x: np.ndarray):
    if x.ndim != 4 or x.shape[0] != 1:
        raise ShapeError(f"network input must be (1, dx, dy, dz), got {getattr(x, 'shape', None)}")
    if x.shape[1] < MIN_INPLANE or x.shape[2] < MIN_INPLANE:
        raise ParameterError(f"in-plane dims must be >= {MIN_INPLANE}, got {x.shape[1:3]}")
    c = {"x": x}
    c["z1"] = conv3d_forward(x, params.conv1)
    c["h1"] = relu(c["z1"])
    c["z2"] = conv3d_forward(c["h1"], params.conv2)
    c["a2"] = relu(c["z2"])
    c["z3"] = conv3d_forward(c["a2"], params.conv3)
    c["s3"] = c["z3"] + c["h1"]
    c["h3"] = relu(c["s3"])
    c["z4"] = conv3d_forward(c["h3"], params.conv4)
    c["a4"] = relu(c["z4"])
    c["z5"] = conv3d_forward(c["a4"], params.conv5)
    c["s5"] = c["z5"] + c["h3"]
    c["h5"] = relu(c["s5"])
    c["z6"] = conv3d_forward(c["h5"], params.conv6)
    c["h6"] = relu(c["z6"])
    c["z7"] = tconv3d_forward(c["h6"], params.tconv7)
    c["h7"] = relu(c["z7"])
    c["z8"] = tconv3d_forward(c["h7"], params.tconv8)
    c["h8"] = relu(c["z8"])
    c["z9"] = conv3d_forward(c["h8"], params.conv9)
    c["y"] = c["z9"] + _upsample_input(x, params.factor)
    return c


def forward(params: NetworkParams, lr_block: np.ndarray) -> np.ndarray:
    """Upsample a (1, dx, dy, dz) block to (1, U*dx, U*dy, dz)."""
    return _forward_cached(params, np.asarray(lr_block))["y"]


def l2_loss(pred: np.ndarray, target: np.ndarray):
    """Mean squared error over all voxels and its gradient w.r.t. pred."""
    if pred.shape != target.shape:
        raise ShapeError(f"loss shapes differ: {pred.shape} vs {target.shape}")
    diff = pred.astype(np.float64) - target.astype(np.float64)
    loss = float(np.mean(diff * diff))
    grad = (2.0 / diff.size) * diff
    return loss, grad.astype(pred.dtype)


def backward(params: NetworkParams, lr_block: np.ndarray, target: np.ndarray):
    """Loss and exact parameter gradients of l2_loss(forward(x), target).

    Returns (loss, grads) with grads keyed like ``named_arrays``.
    """
    c = _forward_cached(params, np.asarray(lr_block))
    loss, g = l2_loss(c["y"], target)
    grads = {}

    g_h8, grads["conv9.weights"], grads["conv9.biases"] = conv3d_backward(c["h8"], params.conv9, g)
    g_z8 = relu_backward(c["z8"], g_h8)
    g_h7, grads["tconv8.weights"], grads["tconv8.biases"] = tconv3d_backward(c["h7"], params.tconv8, g_z8)
    g_z7 = relu_backward(c["z7"], g_h7)
    g_h6, grads["tconv7.weights"], grads["tconv7.biases"] = tconv3d_backward(c["h6"], params.tconv7, g_z7)
    g_z6 = relu_backward(c["z6"], g_h6)
    g_h5, grads["conv6.weights"], grads["conv6.biases"] = conv3d_backward(c["h5"], params.conv6, g_z6)

    g_s5 = relu_backward(c["s5"], g_h5)
    g_a4, grads["conv5.weights"], grads["conv5.biases"] = conv3d_backward(c["a4"], params.conv5, g_s5)
    g_z4 = relu_backward(c["z4"], g_a4)
    g_h3, grads["conv4.weights"], grads["conv4.biases"] = conv3d_backward(c["h3"], params.conv4, g_z4)
    g_h3 = g_h3 + g_s5  # identity skip of the second residual unit

    g_s3 = relu_backward(c["s3"], g_h3)
    g_a2, grads["conv3.weights"], grads["conv3.biases"] = conv3d_backward(c["a2"], params.conv3, g_s3)
    g_z2 = relu_backward(c["z2"], g_a2)
    g_h1, grads["conv2.weights"], grads["conv2.biases"] = conv3d_backward(c["h1"], params.conv2, g_z2)
    g_h1 = g_h1 + g_s3  # identity skip of the first residual unit

    g_z1 = relu_backward(c["z1"], g_h1)
    _, grads["conv1.weights"], grads["conv1.biases"] = conv3d_backward(
        c["x"], params.conv1, g_z1, need_input_grad=False
    )
    return loss, grads


def finite_difference_check(params: NetworkParams, x: np.ndarray, target: np.ndarray, h: float = 1e-3):
    """Max relative error of analytic gradients vs central differences.

    Runs in float64 regardless of the incoming dtype. Returns
    (max_rel_err, per_array dict). Relative error uses a small absolute
    floor so near-zero gradient pairs do not blow up the ratio.
    """
    p64 = params.astype(np.float64)
    x = np.asarray(x, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    _, grads = backward(p64, x, target)
    arrays = dict(p64.named_arrays())
    report = {}
    worst = 0.0
    for key, arr in arrays.items():
        analytic = grads[key]
        err = 0.0
        flat = arr.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            lp, _ = l2_loss(forward(p64, x), target)
            flat[i] = orig - h
            lm, _ = l2_loss(forward(p64, x), target)
            flat[i] = orig
            fd = (lp - lm) / (2 * h)
            a = analytic.reshape(-1)[i]
            denom = max(abs(fd), abs(a), 1e-8)
            err = max(err, abs(fd - a) / denom)
        report[key] = err
        worst = max(worst, err)
    return worst, report
