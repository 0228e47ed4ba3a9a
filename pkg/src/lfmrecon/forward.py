"""Linear imaging operator: per-depth circular 2D convolution summed over
depth for each view, its exact adjoint, and the super-sampling average
pooler with its gradient.

PSF slices are stored with their origin at the center pixel
``(nx//2, ny//2)``; convolution moves that origin onto each source voxel, so
an impulse at (x0, y0) reproduces the PSF centered at (x0, y0). Boundary
conditions are circular (FFT wrap-around): the operator stays exactly
linear and exactly adjoint to :func:`project_adjoint`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .optics import PsfStack, ViewSpec

__all__ = [
    "IntensityVolume",
    "LightFieldStack",
    "project",
    "project_adjoint",
    "downsample",
    "downsample_vjp",
]


@dataclass
class IntensityVolume:
    """Real 3D intensity field, shape (X, Y, Z), voxel size in micrometers."""

    data: np.ndarray
    voxel_size: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 3:
            raise ValueError(f"volume must be 3-D (X, Y, Z), got {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("volume contains NaN or Inf")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape


@dataclass
class LightFieldStack:
    """Per-view projections, shape (U, X, Y)."""

    data: np.ndarray
    views: ViewSpec | None = None

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data, dtype=float)
        if self.data.ndim != 3:
            raise ValueError(
                f"light field must be 3-D (U, X, Y), got {self.data.shape}"
            )

    @property
    def view_count(self) -> int:
        return self.data.shape[0]


def _kernel_spectrum(psfs: PsfStack) -> np.ndarray:
    """FFT of the PSF slices with their center pixel moved to the origin."""
    return np.fft.fft2(np.fft.ifftshift(psfs.psf, axes=(-2, -1)), axes=(-2, -1))


def _check_lateral(lateral: tuple[int, int], psfs: PsfStack, what: str) -> None:
    if lateral != psfs.psf.shape[-2:]:
        raise ValueError(
            f"{what} lateral shape {lateral} does not match "
            f"PSF shape {psfs.psf.shape[-2:]}"
        )


def project(vol: IntensityVolume, psfs: PsfStack) -> LightFieldStack:
    """Forward projection LF_u = sum_z (I_z convolved with PSF_{u,z}).

    Circular same-size convolution via FFT; linear in the volume and
    flux-preserving for unit-sum PSFs.
    """
    x, y, z = vol.shape
    _check_lateral((x, y), psfs, f"volume {vol.shape}")
    if z != psfs.depth_count:
        raise ValueError(
            f"volume {vol.shape} has {z} planes, PSF stack has "
            f"{psfs.depth_count} depths"
        )
    vol_spec = np.fft.fft2(np.moveaxis(vol.data, -1, 0), axes=(-2, -1))
    lf_spec = (_kernel_spectrum(psfs) * vol_spec[None]).sum(axis=1)
    lf = np.fft.ifft2(lf_spec, axes=(-2, -1)).real
    return LightFieldStack(data=lf, views=psfs.views)


def project_adjoint(lf: LightFieldStack, psfs: PsfStack) -> IntensityVolume:
    """Exact adjoint of :func:`project`: correlation with each PSF,
    accumulated over views into per-depth planes."""
    u, x, y = lf.data.shape
    _check_lateral((x, y), psfs, f"light field {lf.data.shape}")
    if u != psfs.view_count:
        raise ValueError(
            f"light field has {u} views, PSF stack has {psfs.view_count}"
        )
    lf_spec = np.fft.fft2(lf.data, axes=(-2, -1))
    vol_spec = (np.conj(_kernel_spectrum(psfs)) * lf_spec[:, None]).sum(axis=0)
    vol = np.fft.ifft2(vol_spec, axes=(-2, -1)).real
    return IntensityVolume(data=np.moveaxis(vol, 0, -1))


def downsample(super_vol: IntensityVolume, s: int) -> IntensityVolume:
    """Average-pool s*s*s blocks of a super-sampled volume.

    Mean pooling (not striding) preserves total flux density: a constant
    field maps to the same constant.
    """
    if s < 1:
        raise ValueError("s must be a positive integer")
    data = super_vol.data
    if any(dim % s for dim in data.shape):
        raise ValueError(f"volume shape {data.shape} is not divisible by s={s}")
    sx, sy, sz = data.shape
    pooled = data.reshape(sx // s, s, sy // s, s, sz // s, s).mean(axis=(1, 3, 5))
    vx, vy, vz = super_vol.voxel_size
    return IntensityVolume(data=pooled, voxel_size=(vx * s, vy * s, vz * s))


def downsample_vjp(upstream: np.ndarray, s: int) -> np.ndarray:
    """Gradient of the average pooler: replicate each upstream value over
    its s*s*s source block, divided by s**3."""
    if s < 1:
        raise ValueError("s must be a positive integer")
    upstream = np.asarray(upstream, dtype=float)
    if upstream.ndim != 3:
        raise ValueError(f"upstream must be 3-D, got shape {upstream.shape}")
    grad = upstream
    for axis in range(3):
        grad = np.repeat(grad, s, axis=axis)
    return grad / s**3
