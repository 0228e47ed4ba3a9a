"""Pupil-plane optics: Zernike phase bases, defocused sub-aperture pupils,
and two-photon PSF synthesis with its reverse-mode coefficient gradient.

Conventions
-----------
Arrays are indexed ``[x, y]`` with shape ``(nx, ny)``. Pupil-plane arrays
live on the centered FFT frequency grid of the lateral image grid (DC at
index ``(nx//2, ny//2)``). Lengths are micrometers, spatial frequencies
cycles per micrometer. Normalized pupil coordinates put the full
numerical-aperture cutoff ``NA / wavelength`` at unit radius, so every
aperture and Zernike map is supported on the unit disk.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GridSpec",
    "ZernikePhaseBasis",
    "ZernikeState",
    "ViewSpec",
    "ComplexPupil",
    "PsfStack",
    "osa_index_to_nm",
    "zernike_basis",
    "sunflower_views",
    "make_pupils",
    "aberration_phase",
    "synthesize_psf",
    "psf_vjp",
]

MAX_ZERNIKE_COUNT = 66  # radial degree 10 in OSA/ANSI single indexing


@dataclass(frozen=True)
class GridSpec:
    """Lateral sampling grid shared by images, pupils, and PSFs.

    ``nx, ny`` are even pixel counts (the FFT center pixel is then
    unambiguous); ``pixel_size`` and ``wavelength`` are in micrometers.
    """

    nx: int
    ny: int
    pixel_size: float
    wavelength: float = 0.92
    numerical_aperture: float = 1.05
    refractive_index: float = 1.33

    def __post_init__(self) -> None:
        if self.nx < 8 or self.ny < 8 or self.nx % 2 or self.ny % 2:
            raise ValueError(
                f"grid must be even-sized and at least 8x8, got {self.nx}x{self.ny}"
            )
        if self.pixel_size <= 0 or self.wavelength <= 0:
            raise ValueError("pixel_size and wavelength must be positive")
        if not 0 < self.numerical_aperture < self.refractive_index:
            raise ValueError(
                "numerical aperture must satisfy 0 < NA < refractive_index, got "
                f"NA={self.numerical_aperture}, n={self.refractive_index}"
            )

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def cutoff_frequency(self) -> float:
        """Full-pupil edge frequency NA / wavelength, cycles per micrometer."""
        return self.numerical_aperture / self.wavelength

    def frequency_grids(self) -> tuple[np.ndarray, np.ndarray]:
        """Centered (fx, fy) meshes in cycles per micrometer."""
        fx = np.fft.fftshift(np.fft.fftfreq(self.nx, d=self.pixel_size))
        fy = np.fft.fftshift(np.fft.fftfreq(self.ny, d=self.pixel_size))
        return np.meshgrid(fx, fy, indexing="ij")

    def pupil_coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Normalized pupil coordinates: the full-NA edge sits at |rho| = 1."""
        fx, fy = self.frequency_grids()
        return fx / self.cutoff_frequency, fy / self.cutoff_frequency


@dataclass(frozen=True)
class ZernikePhaseBasis:
    """RMS-normalized Zernike maps on the unit pupil disk, OSA/ANSI order.

    ``maps`` has shape (K, nx, ny), radians per unit coefficient, zero
    outside the disk.
    """

    grid: GridSpec
    maps: np.ndarray

    @property
    def order_count(self) -> int:
        return self.maps.shape[0]

    @property
    def disk(self) -> np.ndarray:
        rx, ry = self.grid.pupil_coords()
        return rx * rx + ry * ry <= 1.0


@dataclass
class ZernikeState:
    """Learnable aberration coefficients (radians) with a trainable mask.

    Piston (OSA index 0) is always masked: it multiplies the whole pupil by
    a global phase and cannot change the PSF.
    """

    coeffs: np.ndarray
    trainable_mask: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        self.coeffs = np.asarray(self.coeffs, dtype=float).copy()
        if self.coeffs.ndim != 1 or self.coeffs.size < 1:
            raise ValueError("coeffs must be a nonempty 1-D array")
        if self.trainable_mask is None:
            self.trainable_mask = np.ones(self.coeffs.size, dtype=bool)
        else:
            self.trainable_mask = np.asarray(self.trainable_mask, dtype=bool).copy()
        if self.trainable_mask.shape != self.coeffs.shape:
            raise ValueError("trainable_mask must match coeffs shape")
        self.trainable_mask[0] = False

    @classmethod
    def zeros(cls, count: int) -> "ZernikeState":
        return cls(np.zeros(count))

    def copy(self) -> "ZernikeState":
        return ZernikeState(self.coeffs.copy(), self.trainable_mask.copy())


@dataclass(frozen=True)
class ViewSpec:
    """Sub-aperture layout: per-view pupil offsets in normalized coordinates
    plus a common sub-aperture radius. Every sub-aperture must fit inside
    the unit pupil."""

    offsets: np.ndarray
    sub_aperture_radius: float

    def __post_init__(self) -> None:
        offs = np.atleast_2d(np.asarray(self.offsets, dtype=float))
        if offs.ndim != 2 or offs.shape[1] != 2:
            raise ValueError("offsets must have shape (U, 2)")
        if not 0 < self.sub_aperture_radius <= 1:
            raise ValueError("sub_aperture_radius must be in (0, 1]")
        reach = np.hypot(offs[:, 0], offs[:, 1]) + self.sub_aperture_radius
        if np.any(reach > 1 + 1e-12):
            raise ValueError(
                "sub-aperture leaves the unit pupil: max |offset| + radius = "
                f"{reach.max():.4f}"
            )
        object.__setattr__(self, "offsets", offs)

    @property
    def view_count(self) -> int:
        return self.offsets.shape[0]


@dataclass(frozen=True)
class ComplexPupil:
    """Per-(view, depth) pupil fields: sub-aperture indicator times the
    angular-spectrum defocus phase. ``field`` has shape (U, Z, nx, ny)."""

    grid: GridSpec
    views: ViewSpec
    depths: np.ndarray
    field: np.ndarray

    @property
    def view_count(self) -> int:
        return self.field.shape[0]

    @property
    def depth_count(self) -> int:
        return self.field.shape[1]


@dataclass(frozen=True)
class PsfStack:
    """Real nonnegative PSF slices, one per (view, depth), each of unit sum.

    ``psf`` has shape (U, Z, nx, ny) with the unaberrated on-axis peak at
    the center pixel.
    """

    psf: np.ndarray
    grid: GridSpec
    views: ViewSpec
    depths: np.ndarray

    def __post_init__(self) -> None:
        psf = self.psf
        if psf.ndim != 4:
            raise ValueError("psf must have shape (U, Z, nx, ny)")
        expected = (self.views.view_count, len(np.atleast_1d(self.depths)),
                    self.grid.nx, self.grid.ny)
        if psf.shape != expected:
            raise ValueError(f"psf shape {psf.shape} does not match {expected}")
        if np.any(psf < 0):
            raise ValueError("PSF entries must be nonnegative")
        sums = psf.sum(axis=(-2, -1))
        if np.any(np.abs(sums - 1.0) > 1e-9):
            raise ValueError("each PSF slice must sum to 1 within 1e-9")

    @property
    def view_count(self) -> int:
        return self.psf.shape[0]

    @property
    def depth_count(self) -> int:
        return self.psf.shape[1]


def osa_index_to_nm(j: int) -> tuple[int, int]:
    """OSA/ANSI single index -> (radial degree n, signed azimuthal m)."""
    if j < 0:
        raise ValueError("index must be nonnegative")
    n = int(math.ceil((-3.0 + math.sqrt(9.0 + 8.0 * j)) / 2.0))
    m = 2 * j - n * (n + 2)
    return n, m


def _radial_poly(n: int, m: int, rho: np.ndarray) -> np.ndarray:
    out = np.zeros_like(rho)
    for k in range((n - m) // 2 + 1):
        coef = (
            (-1) ** k
            * math.factorial(n - k)
            / (
                math.factorial(k)
                * math.factorial((n + m) // 2 - k)
                * math.factorial((n - m) // 2 - k)
            )
        )
        out += coef * rho ** (n - 2 * k)
    return out


def zernike_basis(grid: GridSpec, count: int) -> ZernikePhaseBasis:
    """First ``count`` Zernike maps in OSA/ANSI order on the grid's pupil.

    Each map carries the RMS normalization sqrt(2(n+1)/(1+delta_{m0})), so a
    unit coefficient contributes one radian of RMS wavefront over the disk.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    if count > MAX_ZERNIKE_COUNT:
        raise ValueError(
            f"count={count} exceeds {MAX_ZERNIKE_COUNT} (radial degree 10); "
            "higher orders are outside the validated range"
        )
    rx, ry = grid.pupil_coords()
    rho = np.hypot(rx, ry)
    theta = np.arctan2(ry, rx)
    disk = rho <= 1.0
    maps = np.zeros((count, grid.nx, grid.ny))
    for j in range(count):
        n, m = osa_index_to_nm(j)
        radial = _radial_poly(n, abs(m), rho)
        if m == 0:
            term = math.sqrt(n + 1.0) * radial
        elif m > 0:
            term = math.sqrt(2.0 * (n + 1.0)) * radial * np.cos(m * theta)
        else:
            term = math.sqrt(2.0 * (n + 1.0)) * radial * np.sin(-m * theta)
        maps[j] = np.where(disk, term, 0.0)
    return ZernikePhaseBasis(grid=grid, maps=maps)


def sunflower_views(count: int, sub_aperture_radius: float = 0.3) -> ViewSpec:
    """Deterministic view layout: one on-axis view plus a golden-angle
    spiral filling the admissible offset disk of radius 1 - r_sub."""
    if count < 1:
        raise ValueError("need at least one view")
    offsets = np.zeros((count, 2))
    r_max = 1.0 - sub_aperture_radius
    golden = math.pi * (3.0 - math.sqrt(5.0))
    for i in range(1, count):
        r = r_max * math.sqrt(i / (count - 1))
        offsets[i] = (r * math.cos(golden * i), r * math.sin(golden * i))
    return ViewSpec(offsets=offsets, sub_aperture_radius=sub_aperture_radius)


def make_pupils(grid: GridSpec, views: ViewSpec, depths) -> ComplexPupil:
    """Sub-aperture pupils with angular-spectrum defocus for each depth.

    field(u, z) = indicator(|rho - offset_u| <= r_sub)
                  * exp(i 2 pi z sqrt(max(0, (n/lambda)^2 - f^2)))

    with f the physical pupil frequency. Depths are micrometers relative to
    the focal plane; conjugate fields for +/-z follow from the phase being
    odd in z.
    """
    depths = np.atleast_1d(np.asarray(depths, dtype=float))
    if depths.size == 0:
        raise ValueError("depths must be nonempty")
    if grid.cutoff_frequency > 0.5 / grid.pixel_size + 1e-12:
        raise ValueError(
            "pupil exceeds the frequency grid: need pixel_size <= "
            f"{0.5 / grid.cutoff_frequency:.4f} um for NA/lambda = "
            f"{grid.cutoff_frequency:.4f} cyc/um"
        )
    fx, fy = grid.frequency_grids()
    axial = np.sqrt(
        np.maximum(0.0, (grid.refractive_index / grid.wavelength) ** 2 - fx**2 - fy**2)
    )
    rx, ry = grid.pupil_coords()
    r2 = views.sub_aperture_radius**2
    field = np.empty((views.view_count, depths.size, grid.nx, grid.ny), dtype=complex)
    defocus = np.exp(2j * np.pi * depths[:, None, None] * axial[None])
    for u, (du, dv) in enumerate(views.offsets):
        aperture = (rx - du) ** 2 + (ry - dv) ** 2 <= r2
        field[u] = aperture[None] * defocus
    return ComplexPupil(grid=grid, views=views, depths=depths, field=field)


def aberration_phase(basis: ZernikePhaseBasis, state: ZernikeState) -> np.ndarray:
    """Shared wavefront phase sum_k coeffs[k] * map_k, radians, (nx, ny)."""
    if state.coeffs.size != basis.order_count:
        raise ValueError(
            f"state has {state.coeffs.size} coefficients, basis has "
            f"{basis.order_count} maps"
        )
    return np.tensordot(state.coeffs, basis.maps, axes=(0, 0))


def _centered_fft2(x: np.ndarray) -> np.ndarray:
    shifted = np.fft.ifftshift(x, axes=(-2, -1))
    return np.fft.fftshift(np.fft.fft2(shifted, axes=(-2, -1)), axes=(-2, -1))


def _centered_fft2_adjoint(y: np.ndarray) -> np.ndarray:
    n = y.shape[-2] * y.shape[-1]
    shifted = np.fft.ifftshift(y, axes=(-2, -1))
    return np.fft.fftshift(np.fft.ifft2(shifted, axes=(-2, -1)), axes=(-2, -1)) * n


def _psf_forward(pupil: ComplexPupil, basis: ZernikePhaseBasis, state: ZernikeState):
    if basis.grid != pupil.grid:
        raise ValueError("basis grid does not match pupil grid")
    phase = aberration_phase(basis, state)
    pupil_wave = pupil.field * np.exp(-1j * phase)
    image_wave = _centered_fft2(pupil_wave)
    magnitude_sq = image_wave.real**2 + image_wave.imag**2
    quartic = magnitude_sq**2
    slice_sums = quartic.sum(axis=(-2, -1), keepdims=True)
    if np.any(slice_sums == 0):
        raise ValueError("empty aperture: a pupil slice is identically zero")
    return pupil_wave, image_wave, magnitude_sq, quartic, slice_sums


def synthesize_psf(
    pupil: ComplexPupil, basis: ZernikePhaseBasis, state: ZernikeState
) -> PsfStack:
    """Two-photon PSF slices |FFT(pupil * exp(-i * phase))|^4, unit-sum.

    The fourth power is squared intensity, i.e. two-photon excitation of the
    field PSF; unit-sum normalization makes forward projection
    flux-preserving for any aberration.
    """
    _, _, _, quartic, slice_sums = _psf_forward(pupil, basis, state)
    return PsfStack(
        psf=quartic / slice_sums, grid=pupil.grid, views=pupil.views,
        depths=pupil.depths,
    )


def psf_vjp(
    pupil: ComplexPupil,
    basis: ZernikePhaseBasis,
    state: ZernikeState,
    upstream: np.ndarray,
) -> np.ndarray:
    """Gradient of sum(upstream * psf) with respect to the Zernike
    coefficients, through the unit-sum normalization, |.|^4, the FFT, and
    the phase exponential. Masked coefficients (piston) return exactly 0.
    """
    pupil_wave, image_wave, magnitude_sq, quartic, slice_sums = _psf_forward(
        pupil, basis, state
    )
    upstream = np.asarray(upstream, dtype=float)
    if upstream.shape != quartic.shape:
        raise ValueError(
            f"upstream shape {upstream.shape} does not match PSF stack "
            f"{quartic.shape}"
        )
    psf = quartic / slice_sums
    weighted = (upstream * psf).sum(axis=(-2, -1), keepdims=True)
    g_quartic = (upstream - weighted) / slice_sums
    image_bar = 4.0 * g_quartic * magnitude_sq * image_wave
    pupil_bar = _centered_fft2_adjoint(image_bar)
    phase_bar = np.imag(np.conj(pupil_bar) * pupil_wave).sum(axis=(0, 1))
    grad = np.tensordot(basis.maps, phase_bar, axes=([1, 2], [0, 1]))
    grad[~state.trainable_mask] = 0.0
    return grad
