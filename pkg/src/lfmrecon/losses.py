"""Training objective: data terms on the simulated light field plus
regularizers on the decoded volume, each returning its gradient.

All reductions are sums in a fixed order, so totals are bit-stable. The
spectral loss normalizes by N = X*Y, the pixel count of one view image (the
length of each 2D DFT); with that convention the complex variant is exactly
Parseval-equivalent to the pixel MSE, which is asserted in the tests. The
amplitude variant compares magnitude spectra only and is therefore
translation-insensitive and genuinely frequency-selective; it is the
optimization default.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "LossWeights",
    "LossReport",
    "LOSS_CSV_HEADER",
    "mse_loss",
    "fft_loss",
    "ztv_loss",
    "pos_loss",
    "total_loss",
]

FFT_VARIANTS = ("complex", "amplitude")

LOSS_CSV_HEADER = "iteration,mse,fft,ztv,pos,total"


@dataclass(frozen=True)
class LossWeights:
    """Relative weights of the spectral, axial-smoothness, and positivity
    terms; the pixel MSE has implicit weight 1."""

    alpha: float = 1e-3
    beta: float = 1e-2
    gamma: float = 1e-2

    def __post_init__(self) -> None:
        if self.alpha < 0 or self.beta < 0 or self.gamma < 0:
            raise ValueError(
                f"loss weights must be nonnegative, got alpha={self.alpha}, "
                f"beta={self.beta}, gamma={self.gamma}"
            )


@dataclass(frozen=True)
class LossReport:
    """Per-evaluation loss components. ``total`` is the weighted sum as
    composed; ``pixel_count`` is the spectral normalizer N."""

    mse: float
    fft: float
    ztv: float
    pos: float
    total: float
    pixel_count: int

    def csv_row(self, iteration: int) -> str:
        return (
            f"{iteration},{self.mse:.10e},{self.fft:.10e},"
            f"{self.ztv:.10e},{self.pos:.10e},{self.total:.10e}"
        )


def _check_pair(lf_sim: np.ndarray, lf_meas: np.ndarray) -> None:
    if lf_sim.shape != lf_meas.shape:
        raise ValueError(
            f"simulated shape {lf_sim.shape} does not match measured "
            f"{lf_meas.shape}"
        )
    if lf_sim.ndim != 3:
        raise ValueError(f"light fields must be (U, X, Y), got {lf_sim.shape}")


def mse_loss(lf_sim: np.ndarray, lf_meas: np.ndarray) -> tuple[float, np.ndarray]:
    """Sum of squared pixel differences over all views."""
    lf_sim = np.asarray(lf_sim, dtype=float)
    lf_meas = np.asarray(lf_meas, dtype=float)
    _check_pair(lf_sim, lf_meas)
    diff = lf_sim - lf_meas
    return float((diff * diff).sum()), 2.0 * diff


def fft_loss(
    lf_sim: np.ndarray, lf_meas: np.ndarray, variant: str = "amplitude"
) -> tuple[float, np.ndarray]:
    """Spectral discrepancy, per-view unnormalized 2D DFT, scaled by 1/(X*Y).

    variant="complex" penalizes the full complex spectral difference (and
    is then identical to :func:`mse_loss` by Parseval). variant="amplitude"
    penalizes magnitude spectra only; its subgradient is taken as 0 at
    spectral zeros of the simulation.
    """
    lf_sim = np.asarray(lf_sim, dtype=float)
    lf_meas = np.asarray(lf_meas, dtype=float)
    _check_pair(lf_sim, lf_meas)
    if variant not in FFT_VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected {FFT_VARIANTS}")
    n = lf_sim.shape[-2] * lf_sim.shape[-1]
    if variant == "complex":
        spec_diff = np.fft.fft2(lf_sim - lf_meas, axes=(-2, -1))
        value = float((spec_diff.real**2 + spec_diff.imag**2).sum()) / n
        # adjoint DFT of the spectral residual collapses back to the pixel
        # residual (Parseval), so the gradient is the MSE gradient
        grad = 2.0 * (lf_sim - lf_meas)
        return value, grad
    spec_sim = np.fft.fft2(lf_sim, axes=(-2, -1))
    spec_meas = np.fft.fft2(lf_meas, axes=(-2, -1))
    mag_sim = np.abs(spec_sim)
    residual = mag_sim - np.abs(spec_meas)
    value = float((residual * residual).sum()) / n
    phasor = np.zeros_like(spec_sim)
    np.divide(spec_sim, mag_sim, out=phasor, where=mag_sim > 0)
    weight = (2.0 / n) * residual * phasor
    grad = n * np.fft.ifft2(weight, axes=(-2, -1)).real
    return value, grad


def ztv_loss(vol: np.ndarray) -> tuple[float, np.ndarray]:
    """Total variation along the depth axis: sum |I_z - I_{z-1}| with the
    subgradient convention sign(0) = 0."""
    vol = np.asarray(vol, dtype=float)
    if vol.ndim != 3 or vol.shape[2] < 2:
        raise ValueError(
            f"volume must be (X, Y, Z) with Z >= 2, got {vol.shape}"
        )
    diff = np.diff(vol, axis=2)
    value = float(np.abs(diff).sum())
    signs = np.sign(diff)
    grad = np.zeros_like(vol)
    grad[:, :, 1:] += signs
    grad[:, :, :-1] -= signs
    return value, grad


def pos_loss(vol: np.ndarray) -> tuple[float, np.ndarray]:
    """Hinge on negative intensities: sum max(0, -I); gradient -1 strictly
    below zero, 0 at and above zero."""
    vol = np.asarray(vol, dtype=float)
    value = float(np.maximum(0.0, -vol).sum())
    grad = np.where(vol < 0, -1.0, 0.0)
    return value, grad


def total_loss(
    lf_sim: np.ndarray,
    lf_meas: np.ndarray,
    vol: np.ndarray,
    weights: LossWeights = LossWeights(),
    variant: str = "amplitude",
) -> tuple[LossReport, np.ndarray, np.ndarray]:
    """Weighted objective and its two gradients.

    Returns (report, gradient w.r.t. lf_sim, gradient w.r.t. vol). The data
    terms (MSE + spectral) drive the light-field gradient; the regularizers
    (axial TV + positivity) drive the volume gradient. The caller composes
    them through its own forward graph.
    """
    if not isinstance(weights, LossWeights):
        weights = LossWeights(*weights)
    mse, grad_mse = mse_loss(lf_sim, lf_meas)
    fft, grad_fft = fft_loss(lf_sim, lf_meas, variant)
    ztv, grad_ztv = ztv_loss(vol)
    pos, grad_pos = pos_loss(vol)
    total = mse + weights.alpha * fft + weights.beta * ztv + weights.gamma * pos
    report = LossReport(
        mse=mse, fft=fft, ztv=ztv, pos=pos, total=total,
        pixel_count=lf_sim.shape[-2] * lf_sim.shape[-1],
    )
    grad_lf = grad_mse + weights.alpha * grad_fft
    grad_vol = weights.beta * grad_ztv + weights.gamma * grad_pos
    return report, grad_lf, grad_vol
