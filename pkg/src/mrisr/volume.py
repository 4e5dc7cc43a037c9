"""Volume data model, synthetic phantoms, and intensity normalization.

A :class:`Volume` is a 3D scalar grid with physical voxel spacing in
millimeters. Array indexing is ``data[x, y, z]``; the serialized layout
(see :mod:`mrisr.fileio`) stores x fastest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

PHANTOM_KINDS = ("nested-ellipsoids", "line-gratings", "mixed")


@dataclass(frozen=True)
class Volume:
    """Immutable 3D scalar grid with voxel spacing in millimeters.

    ``data`` is coerced to float32 on construction, the storage dtype of
    the native file format. ``intensity_range`` records the source
    interval that :func:`normalize_intensity` mapped onto [0, 1]; it is
    None for volumes that were never normalized.
    """

    data: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    intensity_range: tuple[float, float] | None = None
    provenance: str = ""

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim != 3 or any(n < 1 for n in data.shape):
            raise ParameterError(f"volume data must be 3D with positive dims, got shape {data.shape}")
        spacing = tuple(float(s) for s in self.spacing)
        if len(spacing) != 3 or any(not math.isfinite(s) or s <= 0 for s in spacing):
            raise ParameterError(f"spacing must be three positive finite values, got {self.spacing}")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "spacing", spacing)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    def with_data(self, data: np.ndarray, spacing=None, provenance=None) -> "Volume":
        """New volume reusing this volume's metadata unless overridden."""
        return Volume(
            data=data,
            spacing=self.spacing if spacing is None else spacing,
            intensity_range=self.intensity_range,
            provenance=self.provenance if provenance is None else provenance,
        )


@dataclass(frozen=True)
class PhantomSpec:
    """Deterministic recipe for a synthetic test volume.

    ``detail_scale`` is the minimum feature wavelength in voxels; the
    generated volume contains smooth regions, thin shells, and gratings
    down to (and including) that wavelength so high-frequency recovery
    is measurable.
    """

    kind: str = "mixed"
    dims: tuple[int, int, int] = (64, 64, 64)
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    seed: int = 0
    detail_scale: float = 4.0

    def validate(self):
        if self.kind not in PHANTOM_KINDS:
            raise ParameterError(f"unknown phantom kind {self.kind!r}; expected one of {PHANTOM_KINDS}")
        if len(self.dims) != 3 or any(int(n) < 16 for n in self.dims):
            raise ParameterError(f"phantom dims must each be >= 16, got {self.dims}")
        if self.detail_scale < 2:
            raise ParameterError(f"detail_scale must be >= 2 voxels, got {self.detail_scale}")


def _coordinate_grids(dims):
    ax = [np.arange(n, dtype=np.float64) for n in dims]
    return np.meshgrid(*ax, indexing="ij")


def _smooth_background(dims, rng):
    # Sum of a few low-frequency cosine products; values roughly in [0, 1].
    x, y, z = _coordinate_grids(dims)
    nx, ny, nz = dims
    out = np.full(dims, 0.4)
    for _ in range(3):
        kx, ky, kz = rng.integers(1, 3, size=3)
        phase = rng.uniform(0, 2 * np.pi, size=3)
        amp = rng.uniform(0.05, 0.12)
        out += amp * (
            np.cos(2 * np.pi * kx * x / nx + phase[0])
            * np.cos(2 * np.pi * ky * y / ny + phase[1])
            * np.cos(2 * np.pi * kz * z / nz + phase[2])
        )
    return out


def _add_ellipsoids(vol, rng, n_shells=3):
    """Random nested ellipsoids: smooth interiors plus 1-2 voxel shells."""
    dims = vol.shape
    x, y, z = _coordinate_grids(dims)
    center = [0.5 * (n - 1) + rng.uniform(-0.06, 0.06) * n for n in dims]
    base_semi = [rng.uniform(0.30, 0.44) * n for n in dims]
    for shell in range(n_shells):
        scale = 1.0 - 0.28 * shell * rng.uniform(0.8, 1.2)
        if scale <= 0.15:
            break
        ax_, ay, az = (max(2.5, s * scale) for s in base_semi)
        dx, dy, dz = x - center[0], y - center[1], z - center[2]
        r = np.sqrt((dx / ax_) ** 2 + (dy / ay) ** 2 + (dz / az) ** 2)
        # |grad r| converts the level-set offset into voxel distance so the
        # shell stays 1-2 voxels thick regardless of axis lengths.
        grad = np.sqrt((dx / ax_**2) ** 2 + (dy / ay**2) ** 2 + (dz / az**2) ** 2)
        dist = (r - 1.0) * r / np.maximum(grad, 1e-9)
        interior = dist < -0.75
        fill = rng.uniform(0.25, 0.75)
        vol[interior] = 0.65 * vol[interior] + 0.35 * fill
        shell_mask = np.abs(dist) <= 0.75
        vol[shell_mask] = rng.uniform(0.85, 1.0)
    return vol


def _grating(dims, axis, wavelength, phase, amplitude, offset):
    coord = _coordinate_grids(dims)[axis]
    return offset + amplitude * np.sin(2 * np.pi * coord / wavelength + phase)


def _add_grating_bands(vol, rng, detail_scale, full=True):
    """Stack z-bands of axis-aligned sinusoidal gratings.

    The lowest band always carries an x-axis grating at exactly
    ``detail_scale`` voxels so spectral tests have a known target.
    """
    dims = vol.shape
    nz = dims[2]
    n_bands = max(2, min(4, nz // 8))
    edges = np.linspace(0, nz, n_bands + 1).astype(int)
    for b in range(n_bands):
        z0, z1 = edges[b], edges[b + 1]
        band_dims = (dims[0], dims[1], z1 - z0)
        if b == 0:
            axis, wavelength = 0, float(detail_scale)
        else:
            axis = int(rng.integers(0, 2))
            wavelength = float(rng.uniform(detail_scale, max(detail_scale + 1, dims[axis] / 4)))
        g = _grating(
            band_dims,
            axis,
            wavelength,
            phase=rng.uniform(0, 2 * np.pi),
            amplitude=rng.uniform(0.3, 0.45),
            offset=rng.uniform(0.45, 0.55),
        )
        if full:
            vol[:, :, z0:z1] = g
        else:
            vol[:, :, z0:z1] = 0.5 * vol[:, :, z0:z1] + 0.5 * g
    return vol


def generate_phantom(spec: PhantomSpec) -> Volume:
    """Deterministically synthesize a test volume in [0, 1].

    The same spec always yields a bit-identical volume. Kinds:

    - ``nested-ellipsoids``: smooth background plus nested shells.
    - ``line-gratings``: z-stacked bands of axis-aligned sinusoids; the
      first band is an x grating at exactly ``detail_scale`` voxels.
    - ``mixed``: ellipsoids over the background with grating texture
      blended into sub-regions.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    dims = tuple(int(n) for n in spec.dims)
    vol = _smooth_background(dims, rng)
    if spec.kind == "nested-ellipsoids":
        vol = _add_ellipsoids(vol, rng)
    elif spec.kind == "line-gratings":
        vol = _add_grating_bands(vol, rng, spec.detail_scale, full=True)
    else:
        vol = _add_ellipsoids(vol, rng)
        vol = _add_grating_bands(vol, rng, spec.detail_scale, full=False)
        # A couple of thin bright plates for edge-recovery content.
        for _ in range(2):
            axis = int(rng.integers(0, 3))
            pos = int(rng.integers(dims[axis] // 4, 3 * dims[axis] // 4))
            sl = [slice(None)] * 3
            sl[axis] = slice(pos, pos + 1)
            vol[tuple(sl)] = rng.uniform(0.9, 1.0)
    vol = np.clip(vol, 0.0, 1.0)
    return Volume(
        data=vol,
        spacing=spec.spacing,
        provenance=f"phantom:{spec.kind}:seed={spec.seed}",
    )


def _order_statistic(sorted_flat: np.ndarray, percentile: float, side: str) -> float:
    """Rank-based percentile (no interpolation) so normalization is a fixed point."""
    pos = percentile / 100.0 * (sorted_flat.size - 1)
    idx = int(math.floor(pos)) if side == "lower" else int(math.ceil(pos))
    return float(sorted_flat[idx])


def normalize_intensity(v: Volume, p_lo: float = 0.1, p_hi: float = 99.9) -> Volume:
    """Clip to the [p_lo, p_hi] percentile interval and map affinely to [0, 1].

    Percentiles are order statistics (low side rounds down, high side
    rounds up), which makes the operation exactly idempotent. Constant
    volumes map to all zeros.
    """
    if not (0 <= p_lo < p_hi <= 100):
        raise ParameterError(f"percentiles must satisfy 0 <= p_lo < p_hi <= 100, got ({p_lo}, {p_hi})")
    if v.data.size == 0:
        raise ParameterError("cannot normalize an empty volume")
    flat = np.sort(v.data, axis=None)
    lo = _order_statistic(flat, p_lo, "lower")
    hi = _order_statistic(flat, p_hi, "higher")
    if hi <= lo:
        out = np.zeros_like(v.data)
    else:
        out = (np.clip(v.data, lo, hi) - np.float32(lo)) / (np.float32(hi) - np.float32(lo))
    return Volume(data=out, spacing=v.spacing, intensity_range=(lo, hi), provenance=v.provenance)


def crop(v: Volume, origin: tuple[int, int, int], extent: tuple[int, int, int]) -> Volume:
    """Extract the sub-grid ``[origin, origin + extent)``."""
    origin = tuple(int(o) for o in origin)
    extent = tuple(int(e) for e in extent)
    if any(e < 1 for e in extent):
        raise ParameterError(f"crop extent must be positive, got {extent}")
    for o, e, n in zip(origin, extent, v.dims):
        if o < 0 or o + e > n:
            raise ParameterError(f"crop window [{origin}, {origin}+{extent}) exceeds volume dims {v.dims}")
    ox, oy, oz = origin
    ex, ey, ez = extent
    return v.with_data(v.data[ox:ox + ex, oy:oy + ey, oz:oz + ez])


def pad(v: Volume, margins: tuple[int, int, int], fill: float = 0.0) -> Volume:
    """Extend the grid by ``margins`` voxels on both sides of each axis."""
    margins = tuple(int(m) for m in margins)
    if any(m < 0 for m in margins):
        raise ParameterError(f"pad margins must be >= 0, got {margins}")
    padded = np.pad(v.data, [(m, m) for m in margins], mode="constant", constant_values=np.float32(fill))
    return v.with_data(padded)
