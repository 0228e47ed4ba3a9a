"""Explicit feature volume plus the tiny per-voxel decoder.

The representation is fully discrete: one feature vector per super-sampled
voxel, no interpolation between voxels. The decoder is deliberately small
(two affine layers, leaky-ReLU after each) so that it only maps features to
intensity; the spatial structure lives in the feature volume itself. The
final activation is also leaky ReLU, so slightly negative intensities can
occur and are handled by the positivity penalty in the objective.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forward import IntensityVolume

__all__ = [
    "FeatureVolume",
    "Decoder",
    "DecoderGrads",
    "DecodeCache",
    "decode",
    "decode_forward",
    "decode_vjp",
    "init_field",
]

DEFAULT_CHANNELS = 3
DEFAULT_SCALE = 2
DEFAULT_HIDDEN = 32
DEFAULT_SLOPE = 0.01


@dataclass
class FeatureVolume:
    """Per-voxel feature vectors on the super-sampled grid.

    ``features`` has shape (sX, sY, sZ, C); ``scale`` is the super-sampling
    factor s relative to the reconstruction target.
    """

    features: np.ndarray
    scale: int = DEFAULT_SCALE

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=float)
        if self.features.ndim != 4 or self.features.shape[-1] < 1:
            raise ValueError(
                f"features must have shape (sX, sY, sZ, C); got "
                f"{self.features.shape}"
            )
        if self.scale < 1:
            raise ValueError("scale must be a positive integer")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features contain NaN or Inf")

    @property
    def channels(self) -> int:
        return self.features.shape[-1]


@dataclass
class Decoder:
    """Two affine layers with leaky-ReLU after each: C -> hidden -> 1."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: float
    slope: float = DEFAULT_SLOPE

    def __post_init__(self) -> None:
        self.w1 = np.asarray(self.w1, dtype=float)
        self.b1 = np.asarray(self.b1, dtype=float)
        self.w2 = np.asarray(self.w2, dtype=float)
        self.b2 = float(self.b2)
        if self.w1.ndim != 2:
            raise ValueError("w1 must be (C, hidden)")
        hidden = self.w1.shape[1]
        if self.b1.shape != (hidden,) or self.w2.shape != (hidden,):
            raise ValueError("layer widths are inconsistent")
        if not 0 < self.slope < 1:
            raise ValueError("leaky-ReLU slope must lie in (0, 1)")

    @property
    def in_channels(self) -> int:
        return self.w1.shape[0]

    @property
    def hidden(self) -> int:
        return self.w1.shape[1]


@dataclass
class DecoderGrads:
    """Gradients with the same shapes as the Decoder parameters."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: float


@dataclass
class DecodeCache:
    """Forward activations reused by :func:`decode_vjp`.

    Leaky ReLU preserves sign, so the post-activation sign carries the same
    smooth/attenuated split as the pre-activation; for the subgradient rule
    the boundary value 0 takes the attenuated slope either way.
    """

    hidden: np.ndarray
    output: np.ndarray


def _leaky(x: np.ndarray, slope: float) -> np.ndarray:
    # slope in (0, 1) makes leaky ReLU the maximum of the two lines
    out = x * slope
    np.maximum(out, x, out=out)
    return out


def _forward(vol: FeatureVolume, dec: Decoder) -> DecodeCache:
    if vol.channels != dec.in_channels:
        raise ValueError(
            f"feature volume has {vol.channels} channels, decoder expects "
            f"{dec.in_channels}"
        )
    hidden = _leaky(vol.features @ dec.w1 + dec.b1, dec.slope)
    output = _leaky(hidden @ dec.w2 + dec.b2, dec.slope)
    return DecodeCache(hidden=hidden, output=output)


def decode(vol: FeatureVolume, dec: Decoder) -> IntensityVolume:
    """Map every feature vector to a scalar intensity, identically at each
    voxel. Output shape equals the super-sampled grid (sX, sY, sZ)."""
    return IntensityVolume(data=_forward(vol, dec).output)


def decode_forward(
    vol: FeatureVolume, dec: Decoder
) -> tuple[IntensityVolume, DecodeCache]:
    """Like :func:`decode` but also hands back the activations so a later
    :func:`decode_vjp` call can skip recomputing the forward pass."""
    cache = _forward(vol, dec)
    return IntensityVolume(data=cache.output), cache


def decode_vjp(
    vol: FeatureVolume,
    dec: Decoder,
    upstream: np.ndarray,
    cache: DecodeCache | None = None,
) -> tuple[np.ndarray, DecoderGrads]:
    """Reverse-mode rule for :func:`decode`.

    Returns the gradient with respect to the features (same shape as
    ``vol.features``) and the gradients with respect to all four decoder
    parameter arrays.
    """
    if cache is None:
        cache = _forward(vol, dec)
    hidden, output = cache.hidden, cache.output
    upstream = np.asarray(upstream, dtype=float)
    if upstream.shape != output.shape:
        raise ValueError(
            f"upstream shape {upstream.shape} does not match decoded shape "
            f"{output.shape}"
        )
    d_pre2 = upstream * dec.slope
    np.copyto(d_pre2, upstream, where=output > 0)
    grad_b2 = float(d_pre2.sum())
    grad_w2 = np.tensordot(hidden, d_pre2, axes=([0, 1, 2], [0, 1, 2]))
    d_pre1 = d_pre2[..., None] * dec.w2
    np.multiply(d_pre1, dec.slope, out=d_pre1, where=hidden <= 0)
    grad_b1 = d_pre1.sum(axis=(0, 1, 2))
    grad_w1 = np.tensordot(vol.features, d_pre1, axes=([0, 1, 2], [0, 1, 2]))
    grad_features = d_pre1 @ dec.w1.T
    return grad_features, DecoderGrads(w1=grad_w1, b1=grad_b1, w2=grad_w2,
                                       b2=grad_b2)


def init_field(
    shape: tuple[int, int, int],
    channels: int = DEFAULT_CHANNELS,
    scale: int = DEFAULT_SCALE,
    seed: int = 0,
    hidden: int = DEFAULT_HIDDEN,
    slope: float = DEFAULT_SLOPE,
) -> tuple[FeatureVolume, Decoder]:
    """Fresh feature volume and decoder for a reconstruction target of
    ``shape`` (X, Y, Z); features are allocated at scale-fold
    super-sampling.

    Features start small and nonnegative (uniform on [0, 1e-2)), decoder
    weights uniform within +/- sqrt(1/fan_in), biases zero. Deterministic
    under ``seed``.
    """
    x, y, z = shape
    if x < 1 or y < 1 or z < 1:
        raise ValueError(f"invalid target shape {shape}")
    rng = np.random.default_rng(seed)
    features = rng.uniform(0.0, 1e-2,
                           size=(scale * x, scale * y, scale * z, channels))
    w1 = rng.uniform(-1.0, 1.0, size=(channels, hidden)) / np.sqrt(channels)
    w2 = rng.uniform(-1.0, 1.0, size=hidden) / np.sqrt(hidden)
    vol = FeatureVolume(features=features, scale=scale)
    dec = Decoder(w1=w1, b1=np.zeros(hidden), w2=w2, b2=0.0, slope=slope)
    return vol, dec
