"""Fourier-domain inspection helpers: log-magnitude spectrum images and
radial band-energy summaries for judging how much high-frequency content a
reconstruction actually recovered.
"""

from __future__ import annotations

import numpy as np
from PIL import Image

__all__ = ["spectrum_plot", "band_energy_ratio", "radial_profile"]


def _centered_magnitude(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=float)
    if image.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {image.shape}")
    return np.abs(np.fft.fftshift(np.fft.fft2(image)))


def _radial_frequency(shape: tuple[int, int]) -> np.ndarray:
    """Radial frequency magnitude in cycles/pixel, centered layout."""
    fx = np.fft.fftshift(np.fft.fftfreq(shape[0]))
    fy = np.fft.fftshift(np.fft.fftfreq(shape[1]))
    return np.hypot(*np.meshgrid(fx, fy, indexing="ij"))


def spectrum_plot(image: np.ndarray, path) -> str:
    """Write the centered log-magnitude spectrum as an 8-bit grayscale PNG
    and return the path written."""
    mag = np.log1p(_centered_magnitude(image))
    top = mag.max()
    scaled = mag / top if top > 0 else mag
    # image rows follow y; transpose so x runs horizontally
    pixels = np.round(255 * scaled.T).astype(np.uint8)
    Image.fromarray(pixels, mode="L").save(str(path), format="PNG")
    return str(path)


def band_energy_ratio(image: np.ndarray, low_cut: float = 0.5) -> float:
    """Fraction of non-DC spectral energy above ``low_cut`` of Nyquist.

    Energy is |F|^2 summed over the radial band r >= low_cut * 0.5
    cycles/pixel, divided by total non-DC energy. Higher means more fine
    detail survived.
    """
    if not 0 < low_cut < 1:
        raise ValueError("low_cut must lie in (0, 1)")
    mag = _centered_magnitude(image)
    power = mag * mag
    radius = _radial_frequency(power.shape)
    total = power[radius > 0].sum()
    if total == 0:
        return 0.0
    return float(power[radius >= low_cut * 0.5].sum() / total)


def radial_profile(image: np.ndarray, bins: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """Mean spectral power per radial frequency bin.

    Returns (bin centers in cycles/pixel, mean |F|^2 per bin); a compact
    curve for comparing frequency content between reconstructions.
    """
    if bins < 1:
        raise ValueError("bins must be positive")
    mag = _centered_magnitude(image)
    power = mag * mag
    radius = _radial_frequency(power.shape)
    edges = np.linspace(0.0, 0.5, bins + 1)
    centers = 0.5 * (edges[:-1] + edges[1:])
    means = np.zeros(bins)
    for i in range(bins):
        inside = (radius >= edges[i]) & (radius < edges[i + 1])
        if inside.any():
            means[i] = power[inside].mean()
    return centers, means
