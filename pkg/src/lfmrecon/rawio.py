"""Raw array file format plus typed helpers for volumes, light fields, PSF
stacks, and optimizer checkpoints.

Layout of one record (all integers little-endian):

    bytes 0-3   magic  b"PNRV"
    bytes 4-5   format version (u16)
    bytes 6-7   dtype code (u16): 1 = float32, 2 = float64
    bytes 8-9   ndim (u16), at most 4
    then        ndim dimension sizes (u32 each)
    then        payload, row-major, product(dims) * itemsize bytes

Every write is paired with a UTF-8 JSON sidecar at ``<path>.json`` carrying
units, shapes, and provenance. Round-trips are bitwise lossless: the dtype
code preserves the array's own precision (float64 state must survive a
checkpoint unchanged), which is why a second code exists beyond float32.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .field import Decoder, FeatureVolume
from .forward import IntensityVolume, LightFieldStack
from .optics import GridSpec, PsfStack, ViewSpec, ZernikeState

__all__ = [
    "write_raw",
    "read_raw",
    "read_meta",
    "write_volume",
    "read_volume",
    "write_lightfield",
    "read_lightfield",
    "write_psf_stack",
    "read_psf_stack",
    "write_checkpoint",
    "read_checkpoint",
]

MAGIC = b"PNRV"
FORMAT_VERSION = 1
MAX_NDIM = 4

_CODE_TO_DTYPE = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
_DTYPE_TO_CODE = {np.dtype("float32"): 1, np.dtype("float64"): 2}

_HEADER = struct.Struct("<4sHHH")


def _encode(array: np.ndarray) -> bytes:
    array = np.asarray(array)
    if array.dtype not in _DTYPE_TO_CODE:
        array = array.astype(np.float64)
    if array.ndim > MAX_NDIM:
        raise ValueError(f"arrays are limited to {MAX_NDIM} dims, got "
                         f"{array.ndim}")
    code = _DTYPE_TO_CODE[array.dtype]
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, code, array.ndim)
    dims = struct.pack(f"<{array.ndim}I", *array.shape)
    payload = np.ascontiguousarray(array).astype(
        _CODE_TO_DTYPE[code], copy=False
    ).tobytes()
    return header + dims + payload


def _decode(buf: bytes, offset: int = 0) -> tuple[np.ndarray, int]:
    magic, version, code, ndim = _HEADER.unpack_from(buf, offset)
    if magic != MAGIC:
        raise ValueError(f"bad magic {magic!r}; not a raw array file")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported format version {version}")
    if code not in _CODE_TO_DTYPE:
        raise ValueError(f"unknown dtype code {code}")
    if ndim > MAX_NDIM:
        raise ValueError(f"ndim {ndim} exceeds limit {MAX_NDIM}")
    pos = offset + _HEADER.size
    dims = struct.unpack_from(f"<{ndim}I", buf, pos)
    pos += 4 * ndim
    dtype = _CODE_TO_DTYPE[code]
    count = int(np.prod(dims)) if dims else 1
    end = pos + count * dtype.itemsize
    if end > len(buf):
        raise ValueError("truncated payload")
    array = np.frombuffer(buf[pos:end], dtype=dtype).reshape(dims)
    return array.copy(), end


def write_raw(path, array: np.ndarray, meta: dict | None = None) -> None:
    """Write one array plus its JSON sidecar."""
    path = Path(path)
    path.write_bytes(_encode(array))
    sidecar = {
        "format": "raw-array",
        "version": FORMAT_VERSION,
        "shape": list(np.shape(array)),
        "dtype": str(np.asarray(array).dtype),
    }
    if meta:
        sidecar.update(meta)
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=1))


def read_raw(path) -> np.ndarray:
    array, end = _decode(Path(path).read_bytes())
    return array


def read_meta(path) -> dict:
    sidecar = Path(str(path) + ".json")
    if not sidecar.exists():
        return {}
    return json.loads(sidecar.read_text())


def write_volume(path, vol: IntensityVolume, note: str = "") -> None:
    write_raw(path, vol.data, {
        "kind": "volume",
        "axes": "XYZ",
        "voxel_size_um": list(vol.voxel_size),
        "provenance": note,
    })


def read_volume(path) -> IntensityVolume:
    data = read_raw(path)
    if data.ndim != 3:
        raise ValueError(f"expected a 3-D volume, file holds {data.shape}")
    meta = read_meta(path)
    voxel = tuple(meta.get("voxel_size_um", (1.0, 1.0, 1.0)))
    return IntensityVolume(data=data.astype(float), voxel_size=voxel)


def _views_meta(views: ViewSpec | None) -> dict:
    if views is None:
        return {}
    return {
        "view_offsets": views.offsets.tolist(),
        "sub_aperture_radius": views.sub_aperture_radius,
    }


def _views_from_meta(meta: dict) -> ViewSpec | None:
    if "view_offsets" not in meta:
        return None
    return ViewSpec(
        offsets=np.array(meta["view_offsets"], dtype=float),
        sub_aperture_radius=float(meta["sub_aperture_radius"]),
    )


def write_lightfield(path, lf: LightFieldStack, note: str = "") -> None:
    meta = {"kind": "lightfield", "axes": "UXY", "provenance": note}
    meta.update(_views_meta(lf.views))
    write_raw(path, lf.data, meta)


def read_lightfield(path) -> LightFieldStack:
    data = read_raw(path)
    if data.ndim != 3:
        raise ValueError(f"expected a light field (U, X, Y), file holds "
                         f"{data.shape}")
    return LightFieldStack(data=data.astype(float),
                           views=_views_from_meta(read_meta(path)))


def write_psf_stack(path, psfs: PsfStack, note: str = "") -> None:
    grid = psfs.grid
    meta = {
        "kind": "psf-stack",
        "axes": "UZXY",
        "grid": {
            "nx": grid.nx, "ny": grid.ny, "pixel_size": grid.pixel_size,
            "wavelength": grid.wavelength,
            "numerical_aperture": grid.numerical_aperture,
            "refractive_index": grid.refractive_index,
        },
        "depths_um": np.atleast_1d(psfs.depths).tolist(),
        "provenance": note,
    }
    meta.update(_views_meta(psfs.views))
    write_raw(path, psfs.psf, meta)


def read_psf_stack(path) -> PsfStack:
    data = read_raw(path)
    if data.ndim != 4:
        raise ValueError(f"expected a PSF stack (U, Z, nx, ny), file holds "
                         f"{data.shape}")
    meta = read_meta(path)
    if "grid" not in meta or "view_offsets" not in meta:
        raise ValueError("PSF sidecar is missing grid or view metadata")
    grid = GridSpec(**meta["grid"])
    views = _views_from_meta(meta)
    depths = np.array(meta["depths_um"], dtype=float)
    return PsfStack(psf=data.astype(float), grid=grid, views=views,
                    depths=depths)


def write_checkpoint(path, features: FeatureVolume, dec: Decoder,
                     zstate: ZernikeState, seed: int | None = None) -> None:
    """One file holding the whole optimizer state: feature volume, decoder
    parameters, and Zernike coefficients as consecutive raw records."""
    records = [
        features.features,
        dec.w1,
        dec.b1,
        dec.w2,
        np.array([dec.b2]),
        zstate.coeffs,
    ]
    blob = b"".join(_encode(rec) for rec in records)
    path = Path(path)
    path.write_bytes(blob)
    sidecar = {
        "format": "checkpoint",
        "version": FORMAT_VERSION,
        "records": ["features", "w1", "b1", "w2", "b2", "zernike"],
        "channels": features.channels,
        "scale": features.scale,
        "hidden": dec.hidden,
        "slope": dec.slope,
        "trainable_mask": zstate.trainable_mask.tolist(),
    }
    if seed is not None:
        sidecar["seed"] = seed
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=1))


def read_checkpoint(path) -> tuple[FeatureVolume, Decoder, ZernikeState]:
    buf = Path(path).read_bytes()
    arrays = []
    pos = 0
    while pos < len(buf):
        array, pos = _decode(buf, pos)
        arrays.append(array)
    if len(arrays) != 6:
        raise ValueError(f"checkpoint holds {len(arrays)} records, expected 6")
    meta = read_meta(path)
    feats, w1, b1, w2, b2, coeffs = arrays
    features = FeatureVolume(features=feats, scale=int(meta.get("scale", 1)))
    dec = Decoder(w1=w1, b1=b1, w2=w2, b2=float(b2[0]),
                  slope=float(meta.get("slope", 0.01)))
    mask = meta.get("trainable_mask")
    zstate = ZernikeState(
        coeffs=coeffs,
        trainable_mask=None if mask is None else np.array(mask, dtype=bool),
    )
    return features, dec, zstate
