"""Synthetic test volumes: Gaussian beads, three-bar resolution groups, and
smooth random filaments.

All phantoms are deterministic under their seed, live in [0, 1], and keep a
zeroed lateral border (``margin`` voxels) so circular convolution cannot
wrap structure around the edges.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forward import IntensityVolume

__all__ = ["PhantomSpec", "make_phantom"]

KINDS = ("beads", "bars", "filaments")


@dataclass(frozen=True)
class PhantomSpec:
    """Geometry and intensity parameters for one synthetic volume.

    ``count`` applies to beads and filaments; ``pitches`` (voxels, coarse to
    fine) to bars. Explicit bead ``positions``/``amplitudes`` override the
    seeded random placement, e.g. to move a single bead between frames.
    """

    kind: str
    count: int = 10
    radius: float = 1.5
    pitches: tuple[int, ...] = (8, 4, 2)
    value_range: tuple[float, float] = (0.2, 1.0)
    seed: int = 0
    margin: int = 8
    positions: tuple[tuple[float, float, float], ...] | None = None
    amplitudes: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.count < 0 or self.radius <= 0 or self.margin < 0:
            raise ValueError("count, radius, and margin must be sensible")
        lo, hi = self.value_range
        if not 0 <= lo <= hi <= 1 or hi == 0:
            raise ValueError("value_range must satisfy 0 <= lo <= hi <= 1, "
                             "hi > 0")
        if any(p < 2 for p in self.pitches):
            raise ValueError("bar pitches must be at least 2 voxels")


def _interior(shape: tuple[int, int, int], margin: int) -> tuple[int, int]:
    x, y, _ = shape
    ix, iy = x - 2 * margin, y - 2 * margin
    if ix < 2 or iy < 2:
        raise ValueError(
            f"shape {shape} is too small for a {margin}-voxel lateral margin"
        )
    return ix, iy


def _splat_gaussians(vol, centers, amplitudes, sigma):
    x = np.arange(vol.shape[0], dtype=float)
    y = np.arange(vol.shape[1], dtype=float)
    z = np.arange(vol.shape[2], dtype=float)
    for (cx, cy, cz), amp in zip(centers, amplitudes):
        gx = np.exp(-((x - cx) ** 2) / (2 * sigma**2))
        gy = np.exp(-((y - cy) ** 2) / (2 * sigma**2))
        gz = np.exp(-((z - cz) ** 2) / (2 * sigma**2))
        vol += amp * gx[:, None, None] * gy[None, :, None] * gz[None, None, :]


def _beads(spec: PhantomSpec, shape, rng) -> np.ndarray:
    vol = np.zeros(shape)
    if spec.positions is not None:
        centers = np.asarray(spec.positions, dtype=float)
    else:
        if spec.count == 0:
            return vol
        pad = spec.margin + 2 * spec.radius
        if 2 * pad >= min(shape[0], shape[1]):
            raise ValueError(
                f"shape {shape} is too small for beads of radius "
                f"{spec.radius} inside a {spec.margin}-voxel margin"
            )
        zpad = min(1.0, (shape[2] - 1) / 4)
        centers = np.column_stack([
            rng.uniform(pad, shape[0] - pad, spec.count),
            rng.uniform(pad, shape[1] - pad, spec.count),
            rng.uniform(zpad, shape[2] - 1 - zpad, spec.count),
        ])
    lo, hi = spec.value_range
    if spec.amplitudes is not None:
        amps = np.asarray(spec.amplitudes, dtype=float)
    else:
        amps = rng.uniform(lo, hi, len(centers))
    if len(amps) != len(centers):
        raise ValueError("positions and amplitudes must pair up")
    _splat_gaussians(vol, centers, amps, spec.radius)
    return vol


def _bars(spec: PhantomSpec, shape, rng) -> np.ndarray:
    # Three-bar groups, coarse to fine, bars parallel to the y axis; each
    # group of pitch p holds 3 ON stripes of width p//2 and is followed by
    # a p-voxel gap.
    x_dim, y_dim, z_dim = shape
    interior_x, _ = _interior(shape, spec.margin)
    extents = [3 * p - p // 2 for p in spec.pitches]
    needed = sum(extents) + sum(spec.pitches[:-1])
    if needed > interior_x:
        raise ValueError(
            f"bar groups need {needed} voxels along x, only {interior_x} "
            f"inside the margin of shape {shape}"
        )
    vol = np.zeros(shape)
    hi = spec.value_range[1]
    z_width = max(1, z_dim // 3)
    z0 = (z_dim - z_width) // 2
    y0, y1 = spec.margin, y_dim - spec.margin
    cursor = spec.margin
    for pitch, extent in zip(spec.pitches, extents):
        width = pitch // 2
        for bar in range(3):
            start = cursor + bar * pitch
            vol[start : start + width, y0:y1, z0 : z0 + z_width] = hi
        cursor += extent + pitch
    return vol


def _filaments(spec: PhantomSpec, shape, rng) -> np.ndarray:
    vol = np.zeros(shape)
    if spec.count == 0:
        return vol
    lo, hi = spec.value_range
    pad = spec.margin + 2 * spec.radius
    bounds = np.array([
        [pad, shape[0] - pad],
        [pad, shape[1] - pad],
        [0.5, shape[2] - 1.5],
    ])
    if np.any(bounds[:, 1] <= bounds[:, 0]):
        raise ValueError(f"shape {shape} is too small for filaments with "
                         f"margin {spec.margin}")
    steps = max(8, shape[0])
    for _ in range(spec.count):
        point = rng.uniform(bounds[:, 0], bounds[:, 1])
        direction = rng.normal(size=3)
        direction[2] *= 0.25  # keep paths mostly lateral
        direction /= np.linalg.norm(direction)
        amp = rng.uniform(lo, hi)
        path = []
        for _ in range(steps):
            path.append(point.copy())
            kick = rng.normal(scale=0.35, size=3)
            direction = direction * 0.9 + kick * 0.1
            direction /= np.linalg.norm(direction)
            point = point + direction
            low, high = bounds[:, 0], bounds[:, 1]
            bounce = (point < low) | (point > high)
            direction[bounce] *= -1
            point = np.clip(point, low, high)
        _splat_gaussians(vol, path, np.full(len(path), amp), spec.radius)
    # overlapping splats along the path stack up; rescale to the target peak
    peak = vol.max()
    if peak > 0:
        vol *= hi / peak
    return vol


def make_phantom(spec: PhantomSpec, shape: tuple[int, int, int]) -> IntensityVolume:
    """Render the phantom described by ``spec`` at ``shape`` (X, Y, Z)."""
    if len(shape) != 3 or min(shape) < 1:
        raise ValueError(f"shape must be a positive (X, Y, Z), got {shape}")
    _interior(shape, spec.margin)
    rng = np.random.default_rng(spec.seed)
    builder = {"beads": _beads, "bars": _bars, "filaments": _filaments}
    vol = builder[spec.kind](spec, tuple(shape), rng)
    m = spec.margin
    if m > 0:
        vol[:m, :, :] = 0.0
        vol[-m:, :, :] = 0.0
        vol[:, :m, :] = 0.0
        vol[:, -m:, :] = 0.0
    return IntensityVolume(data=np.clip(vol, 0.0, 1.0))
