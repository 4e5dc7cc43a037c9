"""Bit-exact volume file I/O.

Native format (``.vvol``): 8-byte magic ``VVOL0001``, a 4-byte
little-endian unsigned header length, UTF-8 JSON header with keys
``dims``, ``spacing``, ``dtype`` (always ``"f32le"``) and
``provenance``, then the payload as little-endian IEEE-754 float32 in
row-major order with x fastest.

NIfTI-1 is supported as an import-only path for real scans: single-file
``n+1`` images, 3D, datatypes int16 (4) and float32 (16).
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import (
    NiftiImportError,
    TruncatedPayloadError,
    UnsupportedEncodingError,
    VolumeFormatError,
)
from .volume import Volume

VVOL_MAGIC = b"VVOL0001"


def write_volume(v: Volume, path) -> None:
    """Write a volume in the native format; floats are stored bit-exactly."""
    header = {
        "dims": list(v.dims),
        "spacing": list(v.spacing),
        "dtype": "f32le",
        "provenance": v.provenance,
    }
    header_bytes = json.dumps(header).encode("utf-8")
    payload = np.ascontiguousarray(v.data.ravel(order="F"), dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(VVOL_MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        fh.write(payload)


def read_volume(path) -> Volume:
    """Read a native volume file; inverse of :func:`write_volume`."""
    raw = Path(path).read_bytes()
    if len(raw) < len(VVOL_MAGIC) + 4:
        raise VolumeFormatError(f"{path}: file too short for a volume header")
    if raw[:8] != VVOL_MAGIC:
        raise VolumeFormatError(f"{path}: bad magic {raw[:8]!r}, expected {VVOL_MAGIC!r}")
    (header_len,) = struct.unpack("<I", raw[8:12])
    header_end = 12 + header_len
    if len(raw) < header_end:
        raise VolumeFormatError(f"{path}: header length {header_len} exceeds file size")
    try:
        header = json.loads(raw[12:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise VolumeFormatError(f"{path}: malformed JSON header: {exc}") from exc
    for key in ("dims", "spacing", "dtype"):
        if key not in header:
            raise VolumeFormatError(f"{path}: header missing key {key!r}")
    dims = header["dims"]
    if (
        not isinstance(dims, list)
        or len(dims) != 3
        or any(not isinstance(n, int) or n < 1 for n in dims)
    ):
        raise VolumeFormatError(f"{path}: invalid dims {dims!r}")
    spacing = header["spacing"]
    if not isinstance(spacing, list) or len(spacing) != 3 or any(s <= 0 for s in spacing):
        raise VolumeFormatError(f"{path}: invalid spacing {spacing!r}")
    if header["dtype"] != "f32le":
        raise UnsupportedEncodingError(f"{path}: unsupported dtype {header['dtype']!r}")
    count = dims[0] * dims[1] * dims[2]
    payload = raw[header_end:]
    if len(payload) < count * 4:
        raise TruncatedPayloadError(
            f"{path}: payload holds {len(payload) // 4} scalars, header promises {count}"
        )
    if len(payload) > count * 4:
        raise VolumeFormatError(f"{path}: {len(payload) - count * 4} trailing bytes after payload")
    data = np.frombuffer(payload, dtype="<f4", count=count).reshape(dims, order="F")
    return Volume(
        data=data.copy(),
        spacing=tuple(spacing),
        provenance=str(header.get("provenance", "")),
    )


_NIFTI_DTYPES = {4: np.dtype("<i2"), 16: np.dtype("<f4")}


def import_nifti1(path) -> Volume:
    """Import a single-file 3D NIfTI-1 image as a Volume.

    Dims come from ``dim[1..3]``, spacing from ``pixdim[1..3]``. int16
    voxels are rescaled by ``scl_slope``/``scl_inter`` when the slope is
    set (non-zero); float32 voxels are taken as stored.
    """
    raw = Path(path).read_bytes()
    if len(raw) < 348:
        raise NiftiImportError(f"{path}: shorter than the 348-byte NIfTI-1 header")
    magic = raw[344:348]
    if magic != b"n+1\x00":
        raise NiftiImportError(f"{path}: magic {magic!r} is not a single-file NIfTI-1 image")
    (sizeof_hdr,) = struct.unpack("<i", raw[0:4])
    if sizeof_hdr == 348:
        end = "<"
    elif struct.unpack(">i", raw[0:4])[0] == 348:
        end = ">"
    else:
        raise NiftiImportError(f"{path}: sizeof_hdr {sizeof_hdr} is not 348 in either byte order")
    dim = struct.unpack(end + "8h", raw[40:56])
    if dim[0] != 3:
        raise NiftiImportError(f"{path}: dim[0]={dim[0]}, only 3D images are supported")
    (datatype,) = struct.unpack(end + "h", raw[70:72])
    if datatype not in _NIFTI_DTYPES:
        raise NiftiImportError(f"{path}: unsupported datatype code {datatype} (expected 4 or 16)")
    pixdim = struct.unpack(end + "8f", raw[76:108])
    (vox_offset,) = struct.unpack(end + "f", raw[108:112])
    scl_slope, scl_inter = struct.unpack(end + "2f", raw[112:120])
    dims = tuple(int(n) for n in dim[1:4])
    if any(n < 1 for n in dims):
        raise NiftiImportError(f"{path}: non-positive dims {dims}")
    spacing = tuple(float(p) for p in pixdim[1:4])
    if any(not np.isfinite(s) or s <= 0 for s in spacing):
        raise NiftiImportError(f"{path}: non-positive pixdim {spacing}")
    dtype = _NIFTI_DTYPES[datatype].newbyteorder(end)
    count = dims[0] * dims[1] * dims[2]
    offset = int(vox_offset)
    if offset < 348 or len(raw) < offset + count * dtype.itemsize:
        raise NiftiImportError(f"{path}: data section truncated")
    voxels = np.frombuffer(raw, dtype=dtype, count=count, offset=offset)
    data = voxels.astype(np.float32)
    if datatype == 4 and scl_slope != 0.0:
        data = data * np.float32(scl_slope) + np.float32(scl_inter)
    return Volume(
        data=data.reshape(dims, order="F"),
        spacing=spacing,
        provenance=f"nifti1:{Path(path).name}",
    )
