"""MR acquisition forward model and LR/HR training-pair synthesis.

The measurement chain applied to a high-resolution volume is: rigid
displacement (per-slice motion), separable PSF blur, slice selection,
decimation, and Rician noise. Low-resolution training inputs are made
by blurring in-plane with a cosine-windowed sinc kernel and decimating,
leaving the through-plane axis untouched.

Axis conventions: volumes index as ``data[x, y, z]``; string axes map
x->0, y->1, z->2. Mirror boundary handling means whole-sample
reflection (``np.pad`` mode ``reflect``: no edge duplication), and all
decimation/upsampling phases are anchored at index 0.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParameterError, ShapeError
from .fileio import read_volume, write_volume
from .volume import Volume

AXIS_INDEX = {"x": 0, "y": 1, "z": 2}
INPLANE_AXES = {0: (1, 2), 1: (0, 2), 2: (0, 1)}


def axis_index(axis) -> int:
    if isinstance(axis, str):
        try:
            return AXIS_INDEX[axis]
        except KeyError:
            raise ParameterError(f"axis must be one of x, y, z; got {axis!r}") from None
    a = int(axis)
    if a not in (0, 1, 2):
        raise ParameterError(f"axis index must be 0, 1, or 2; got {axis}")
    return a


# ---------------------------------------------------------------------------
# PSF kernel


@dataclass(frozen=True)
class PsfKernel:
    """Separable 1D blur kernel: odd tap count, symmetric, sums to 1."""

    taps: np.ndarray
    factor: int

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=np.float64)
        if taps.ndim != 1 or taps.size % 2 != 1:
            raise ParameterError(f"kernel taps must be a 1D odd-length vector, got shape {taps.shape}")
        if not np.allclose(taps, taps[::-1], atol=1e-12):
            raise ParameterError("kernel taps must be symmetric about the center")
        if abs(taps.sum() - 1.0) > 1e-12:
            raise ParameterError(f"kernel taps must sum to 1, got {taps.sum()!r}")
        object.__setattr__(self, "taps", taps)

    @property
    def halfwidth(self) -> int:
        return self.taps.size // 2


def make_cws_kernel(factor: int, support_halfwidth: int | None = None) -> PsfKernel:
    """Cosine-windowed sinc anti-aliasing kernel for a given decimation factor.

    Tap at offset k is ``sinc(k / factor) * cos(pi * k / (2H + 1))`` for
    |k| <= H, normalized to unit sum. ``factor == 1`` yields the delta
    kernel. Default support halfwidth is ``2 * factor``.
    """
    factor = int(factor)
    if factor < 1:
        raise ParameterError(f"factor must be >= 1, got {factor}")
    if factor == 1:
        return PsfKernel(taps=np.array([1.0]), factor=1)
    h = 2 * factor if support_halfwidth is None else int(support_halfwidth)
    if h < factor:
        raise ParameterError(f"support_halfwidth must be >= factor, got {h} < {factor}")
    k = np.arange(-h, h + 1, dtype=np.float64)
    taps = np.sinc(k / factor) * np.cos(np.pi * k / (2 * h + 1))
    taps /= taps.sum()
    return PsfKernel(taps=taps, factor=factor)


# ---------------------------------------------------------------------------
# Separable correlation with mirror boundaries (and its exact adjoint)


def _correlate1d_mirror(arr: np.ndarray, taps: np.ndarray, axis: int) -> np.ndarray:
    """Correlate one axis with mirror boundary handling; dims preserved."""
    n = arr.shape[axis]
    if taps.size > n:
        raise ParameterError(f"kernel of {taps.size} taps is wider than axis length {n}")
    h = taps.size // 2
    idx = np.pad(np.arange(n), h, mode="reflect")
    x = np.moveaxis(arr, axis, 0)[idx]
    out = np.zeros_like(x[:n], dtype=np.result_type(arr.dtype, np.float64))
    for t in range(taps.size):
        out += taps[t] * x[t:t + n]
    return np.moveaxis(out, 0, axis)


def _correlate1d_mirror_adjoint(arr: np.ndarray, taps: np.ndarray, axis: int) -> np.ndarray:
    """Exact adjoint of :func:`_correlate1d_mirror` as a linear operator."""
    n = arr.shape[axis]
    h = taps.size // 2
    idx = np.pad(np.arange(n), h, mode="reflect")
    g = np.moveaxis(np.asarray(arr, dtype=np.float64), axis, 0)
    gp = np.zeros((n + 2 * h,) + g.shape[1:])
    for t in range(taps.size):
        gp[t:t + n] += taps[t] * g
    out = np.zeros((n,) + g.shape[1:])
    np.add.at(out, idx, gp)
    return np.moveaxis(out, 0, axis)


def blur_separable(v: Volume, kernel: PsfKernel, axes=("x", "y", "z")) -> Volume:
    """Convolve independently along each listed axis with mirror boundaries."""
    data = np.asarray(v.data, dtype=np.float64)
    for axis in axes:
        data = _correlate1d_mirror(data, kernel.taps, axis_index(axis))
    return v.with_data(data)


# ---------------------------------------------------------------------------
# Decimation and slice selection


def decimate(v: Volume, factors: tuple[int, int, int]) -> Volume:
    """Keep samples at indices divisible by the per-axis factor."""
    factors = tuple(int(f) for f in factors)
    if any(f < 1 for f in factors):
        raise ParameterError(f"decimation factors must be >= 1, got {factors}")
    for f, n in zip(factors, v.dims):
        if n % f != 0:
            raise ParameterError(f"factor {f} does not divide axis length {n}")
    fx, fy, fz = factors
    data = v.data[::fx, ::fy, ::fz]
    spacing = tuple(s * f for s, f in zip(v.spacing, factors))
    return v.with_data(data, spacing=spacing)


def slice_select(v: Volume, axis, index: int) -> np.ndarray:
    """Extract one 2D plane; remaining axes keep their natural order."""
    a = axis_index(axis)
    n = v.dims[a]
    index = int(index)
    if not (0 <= index < n):
        raise ParameterError(f"slice index {index} out of range [0, {n}) along axis {a}")
    return np.take(v.data, index, axis=a)


# ---------------------------------------------------------------------------
# Rigid motion and plane resampling


@dataclass(frozen=True)
class RigidMotion:
    """Rigid transform: translation (mm) and rotation (radians, Rz*Ry*Rx)
    applied about the volume center. The zero vector is the identity."""

    tx: float = 0.0
    ty: float = 0.0
    tz: float = 0.0
    rx: float = 0.0
    ry: float = 0.0
    rz: float = 0.0

    @classmethod
    def from_vector(cls, vec) -> "RigidMotion":
        t = [float(x) for x in vec]
        if len(t) != 6 or any(not math.isfinite(x) for x in t):
            raise ParameterError(f"rigid motion needs 6 finite components, got {vec}")
        return cls(*t)

    def as_vector(self) -> np.ndarray:
        return np.array([self.tx, self.ty, self.tz, self.rx, self.ry, self.rz])

    def is_identity(self) -> bool:
        return not np.any(self.as_vector())

    def rotation_matrix(self) -> np.ndarray:
        cx, sx = math.cos(self.rx), math.sin(self.rx)
        cy, sy = math.cos(self.ry), math.sin(self.ry)
        cz, sz = math.cos(self.rz), math.sin(self.rz)
        rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
        ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
        rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
        return rz @ ry @ rx


def transform_points(pts: np.ndarray, dims, spacing, motion: RigidMotion) -> np.ndarray:
    """Map voxel-space points through a rigid motion about the volume center."""
    center = (np.asarray(dims, dtype=np.float64) - 1.0) / 2.0
    spacing = np.asarray(spacing, dtype=np.float64)
    mm = (pts - center) * spacing
    moved = mm @ motion.rotation_matrix().T + np.array([motion.tx, motion.ty, motion.tz])
    return moved / spacing + center


def trilinear_sample(data: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Trilinear interpolation at voxel-space points; 0 outside the grid.

    ``pts`` has shape (..., 3); the result matches the leading shape.
    """
    dims = np.asarray(data.shape)
    flat = pts.reshape(-1, 3)
    inside = np.all((flat >= 0) & (flat <= dims - 1), axis=1)
    base = np.clip(np.floor(flat), 0, np.maximum(dims - 2, 0)).astype(np.int64)
    frac = flat - base
    out = np.zeros(flat.shape[0])
    for corner in range(8):
        off = np.array([(corner >> 2) & 1, (corner >> 1) & 1, corner & 1])
        idx = np.minimum(base + off, dims - 1)
        w = np.prod(np.where(off == 1, frac, 1.0 - frac), axis=1)
        out += w * data[idx[:, 0], idx[:, 1], idx[:, 2]]
    out[~inside] = 0.0
    return out.reshape(pts.shape[:-1])


def trilinear_splat(shape, pts: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Exact adjoint of :func:`trilinear_sample`: scatter values into a grid."""
    dims = np.asarray(shape)
    flat = pts.reshape(-1, 3)
    vals = np.asarray(values, dtype=np.float64).reshape(-1)
    inside = np.all((flat >= 0) & (flat <= dims - 1), axis=1)
    flat = flat[inside]
    vals = vals[inside]
    base = np.clip(np.floor(flat), 0, np.maximum(dims - 2, 0)).astype(np.int64)
    frac = flat - base
    size = int(np.prod(shape))
    indices = []
    weighted = []
    for corner in range(8):
        off = np.array([(corner >> 2) & 1, (corner >> 1) & 1, corner & 1])
        idx = np.minimum(base + off, dims - 1)
        w = np.prod(np.where(off == 1, frac, 1.0 - frac), axis=1)
        indices.append(np.ravel_multi_index((idx[:, 0], idx[:, 1], idx[:, 2]), shape))
        weighted.append(w * vals)
    acc = np.bincount(np.concatenate(indices), weights=np.concatenate(weighted), minlength=size)
    return acc.reshape(shape)


def _plane_points(dims, axis: int, through: float) -> np.ndarray:
    """Voxel-space grid points of one plane; in-plane axes in natural order."""
    a0, a1 = INPLANE_AXES[axis]
    i = np.arange(dims[a0], dtype=np.float64)
    j = np.arange(dims[a1], dtype=np.float64)
    gi, gj = np.meshgrid(i, j, indexing="ij")
    pts = np.empty(gi.shape + (3,))
    pts[..., a0] = gi
    pts[..., a1] = gj
    pts[..., axis] = through
    return pts


def sample_plane(data: np.ndarray, spacing, motion: RigidMotion, axis, through: float) -> np.ndarray:
    """Sample a (possibly fractional) plane of a volume under a rigid motion."""
    a = axis_index(axis)
    pts = _plane_points(data.shape, a, float(through))
    pts = transform_points(pts.reshape(-1, 3), data.shape, spacing, motion)
    return trilinear_sample(data, pts).reshape(
        data.shape[INPLANE_AXES[a][0]], data.shape[INPLANE_AXES[a][1]]
    )


def resample_rigid(v: Volume, motion: RigidMotion, axis, index: int) -> np.ndarray:
    """Extract the plane at ``index`` after moving the sampling grid rigidly.

    Translations are in millimeters (converted through the voxel
    spacing); rotations are about the volume center. Samples falling
    outside the volume take the value 0.
    """
    a = axis_index(axis)
    index = int(index)
    if not (0 <= index < v.dims[a]):
        raise ParameterError(f"slice index {index} out of range along axis {a}")
    if not np.all(np.isfinite(motion.as_vector())):
        raise ParameterError("rigid motion components must be finite")
    return sample_plane(np.asarray(v.data, dtype=np.float64), v.spacing, motion, a, float(index))


# ---------------------------------------------------------------------------
# Slice stacks


@dataclass
class SliceStack:
    """Ordered parallel 2D slices acquired along one axis.

    ``slices`` has shape (n_slices, a, b) where (a, b) are the in-plane
    axes in natural order; ``poses`` holds the current rigid pose
    estimate per slice (identity until registration updates them);
    ``thickness`` is the through-plane slice distance in millimeters.
    """

    axis: str
    slices: np.ndarray
    spacing_inplane: tuple[float, float]
    thickness: float
    poses: list[RigidMotion] = field(default_factory=list)

    def __post_init__(self):
        self.axis = "xyz"[axis_index(self.axis)]
        self.slices = np.asarray(self.slices, dtype=np.float32)
        if self.slices.ndim != 3:
            raise ShapeError(f"stack slices must be (n, a, b), got shape {self.slices.shape}")
        if not self.poses:
            self.poses = [RigidMotion() for _ in range(self.slices.shape[0])]
        if len(self.poses) != self.slices.shape[0]:
            raise ShapeError(
                f"{len(self.poses)} poses for {self.slices.shape[0]} slices"
            )
        if self.thickness <= 0 or any(s <= 0 for s in self.spacing_inplane):
            raise ParameterError("stack spacing and thickness must be positive")

    @property
    def n_slices(self) -> int:
        return self.slices.shape[0]

    def as_volume(self) -> Volume:
        """Stack the slices back into a volume along the stack axis."""
        a = axis_index(self.axis)
        data = np.moveaxis(self.slices, 0, a)
        spacing = [0.0, 0.0, 0.0]
        spacing[a] = self.thickness
        a0, a1 = INPLANE_AXES[a]
        spacing[a0], spacing[a1] = self.spacing_inplane
        return Volume(data=data, spacing=tuple(spacing), provenance=f"stack:{self.axis}")


def stack_select(v: Volume, axis) -> SliceStack:
    """All planes along one axis as a stack with identity poses."""
    a = axis_index(axis)
    a0, a1 = INPLANE_AXES[a]
    return SliceStack(
        axis="xyz"[a],
        slices=np.moveaxis(v.data, a, 0).copy(),
        spacing_inplane=(v.spacing[a0], v.spacing[a1]),
        thickness=v.spacing[a],
    )


# ---------------------------------------------------------------------------
# Noise


def _rician(data: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    n1 = rng.normal(0.0, sigma, size=data.shape)
    n2 = rng.normal(0.0, sigma, size=data.shape)
    return np.sqrt((data + n1) ** 2 + n2 ** 2)


def add_rician_noise(v: Volume, sigma: float, seed: int = 0) -> Volume:
    """Magnitude-MRI noise: sqrt((x + n1)^2 + n2^2), n1, n2 ~ N(0, sigma).

    sigma == 0 degenerates to the absolute-value map. Deterministic in
    the seed.
    """
    if sigma < 0:
        raise ParameterError(f"noise sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return v.with_data(np.abs(v.data))
    rng = np.random.default_rng(seed)
    return v.with_data(_rician(np.asarray(v.data, dtype=np.float64), sigma, rng))


# ---------------------------------------------------------------------------
# Degradation pipeline and training pairs


@dataclass(frozen=True)
class DegradeConfig:
    """In-plane degradation recipe for LR/HR pair synthesis."""

    factor: int = 2
    z_slices: int = 5
    noise_sigma: float = 0.0
    seed: int = 0
    mode: str = "cws"  # "cws" = windowed-sinc blur + decimate; "linear" = block mean

    def __post_init__(self):
        if self.factor not in (2, 4):
            raise ParameterError(f"in-plane factor must be 2 or 4, got {self.factor}")
        if self.z_slices < 1:
            raise ParameterError(f"z_slices must be >= 1, got {self.z_slices}")
        if self.noise_sigma < 0:
            raise ParameterError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if self.mode not in ("cws", "linear"):
            raise ParameterError(f"degrade mode must be 'cws' or 'linear', got {self.mode!r}")

    def to_dict(self) -> dict:
        return {
            "factor": self.factor,
            "z_slices": self.z_slices,
            "noise_sigma": self.noise_sigma,
            "seed": self.seed,
            "mode": self.mode,
        }


def degrade(v: Volume, cfg: DegradeConfig) -> Volume:
    """Produce the LR counterpart of an HR volume (in-plane only).

    Default pipeline: cosine-windowed sinc blur along x and y, decimate
    by the factor in-plane, then Rician noise. The noise step is skipped
    entirely when ``noise_sigma == 0`` so the noiseless output equals
    ``decimate(blur(v))`` exactly.
    """
    f = cfg.factor
    nx, ny, _ = v.dims
    if nx % f or ny % f:
        raise ParameterError(f"factor {f} must divide in-plane dims {(nx, ny)}")
    if cfg.mode == "cws":
        kernel = make_cws_kernel(f)
        lr = decimate(blur_separable(v, kernel, axes=("x", "y")), (f, f, 1))
    else:
        nz = v.dims[2]
        block = v.data.reshape(nx // f, f, ny // f, f, nz).mean(axis=(1, 3))
        lr = Volume(
            data=block,
            spacing=(v.spacing[0] * f, v.spacing[1] * f, v.spacing[2]),
            provenance=v.provenance,
        )
    if cfg.noise_sigma > 0:
        lr = add_rician_noise(lr, cfg.noise_sigma, cfg.seed)
    return lr


@dataclass(frozen=True)
class TrainingPair:
    """Aligned LR/HR blocks: full in-plane extent, a window of z slices."""

    lr: np.ndarray  # (1, X/f, Y/f, z)
    hr: np.ndarray  # (1, X, Y, z)
    provenance: str = ""

    def __post_init__(self):
        lr = np.asarray(self.lr, dtype=np.float32)
        hr = np.asarray(self.hr, dtype=np.float32)
        if lr.ndim != 4 or hr.ndim != 4 or lr.shape[0] != 1 or hr.shape[0] != 1:
            raise ShapeError("training blocks must be single-channel 4D (1, x, y, z)")
        if hr.shape[3] != lr.shape[3]:
            raise ShapeError(f"z dims must match, got lr z={lr.shape[3]} hr z={hr.shape[3]}")
        if hr.shape[1] % lr.shape[1] or hr.shape[2] % lr.shape[2]:
            raise ShapeError(f"hr in-plane dims {hr.shape[1:3]} not multiples of lr {lr.shape[1:3]}")
        object.__setattr__(self, "lr", lr)
        object.__setattr__(self, "hr", hr)

    @property
    def factor(self) -> int:
        return self.hr.shape[1] // self.lr.shape[1]


def gen_training_pairs(hr: Volume, cfg: DegradeConfig) -> list[TrainingPair]:
    """Degrade once, then window into blocks of ``z_slices`` consecutive slices.

    Windows stride by ``z_slices`` (no overlap) and a trailing partial
    window is dropped; each pair keeps the entire in-plane extent.
    """
    nz = hr.dims[2]
    z = cfg.z_slices
    if nz < z:
        raise ParameterError(f"volume has {nz} slices, fewer than z_slices={z}")
    lr = degrade(hr, cfg)
    pairs = []
    for w in range(nz // z):
        z0 = w * z
        pairs.append(
            TrainingPair(
                lr=lr.data[None, :, :, z0:z0 + z],
                hr=hr.data[None, :, :, z0:z0 + z],
                provenance=f"{hr.provenance or 'volume'}#z{z0}",
            )
        )
    return pairs


def write_pair_archive(pairs, cfg: DegradeConfig, out_dir, hr_spacing=(1.0, 1.0, 1.0), source="") -> None:
    """Write pairs as ``pair{i}_{lr|hr}.vvol`` plus ``manifest.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lr_spacing = (hr_spacing[0] * cfg.factor, hr_spacing[1] * cfg.factor, hr_spacing[2])
    for i, p in enumerate(pairs):
        write_volume(
            Volume(data=p.lr[0], spacing=lr_spacing, provenance=p.provenance),
            out / f"pair{i:04d}_lr.vvol",
        )
        write_volume(
            Volume(data=p.hr[0], spacing=hr_spacing, provenance=p.provenance),
            out / f"pair{i:04d}_hr.vvol",
        )
    manifest = {"config": cfg.to_dict(), "pair_count": len(pairs), "source": source}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))


def read_pair_archive(in_dir) -> tuple[list[TrainingPair], dict]:
    """Load a pair archive written by :func:`write_pair_archive`."""
    root = Path(in_dir)
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise ParameterError(f"{in_dir}: not a pair archive (missing manifest.json)")
    manifest = json.loads(manifest_path.read_text())
    pairs = []
    for i in range(int(manifest["pair_count"])):
        lr = read_volume(root / f"pair{i:04d}_lr.vvol")
        hr = read_volume(root / f"pair{i:04d}_hr.vvol")
        pairs.append(TrainingPair(lr=lr.data[None], hr=hr.data[None], provenance=lr.provenance))
    return pairs, manifest
