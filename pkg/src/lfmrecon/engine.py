"""Reconstruction engine: gradient-descent fitting of the feature volume,
decoder, and aberration coefficients against measured projections, plus the
multiplicative Richardson-Lucy baseline and a full-chain gradient checker.

One optimization loop owns its mutable state exclusively; every forward and
backward pass is a pure function of that state, so traces are deterministic
for a given config and seed.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .field import (
    Decoder,
    FeatureVolume,
    decode,
    decode_forward,
    decode_vjp,
    init_field,
)
from .forward import (
    IntensityVolume,
    LightFieldStack,
    downsample,
    downsample_vjp,
    project,
    project_adjoint,
)
from .losses import LOSS_CSV_HEADER, LossReport, LossWeights, total_loss
from .optics import (
    ComplexPupil,
    PsfStack,
    ZernikePhaseBasis,
    ZernikeState,
    psf_vjp,
    synthesize_psf,
)

__all__ = [
    "ReconConfig",
    "ReconResult",
    "GradientCheckReport",
    "DivergenceError",
    "Adam",
    "reconstruct",
    "reconstruct_warmstart",
    "rld",
    "gradient_check",
]

# fraction of iterations to hold aberration coefficients fixed so the
# volume estimate stabilizes before the pupil phase starts moving
DAO_WARMUP_FRACTION = 0.1

RLD_EPS = 1e-12


class DivergenceError(RuntimeError):
    """Raised when the total loss stops being finite."""

    def __init__(self, iteration: int):
        super().__init__(
            f"total loss became non-finite at iteration {iteration}"
        )
        self.iteration = iteration


@dataclass
class ReconConfig:
    """Knobs for the optimization loop. Learning rates must be positive;
    iteration counts at least 1."""

    iterations: int = 2000
    warmstart_iterations: int = 200
    field_lr: float = 1e-2
    decoder_lr: float = 1e-3
    zernike_lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weights: LossWeights = field(default_factory=LossWeights)
    fft_variant: str = "amplitude"
    dao_enabled: bool = True
    scale: int = 2
    channels: int = 3
    hidden: int = 32
    seed: int = 0
    trace_csv: str | None = None
    checkpoint_path: str | None = None
    checkpoint_every: int = 0

    def __post_init__(self) -> None:
        if self.iterations < 1 or self.warmstart_iterations < 1:
            raise ValueError("iteration counts must be at least 1")
        if min(self.field_lr, self.decoder_lr, self.zernike_lr) <= 0:
            raise ValueError("learning rates must be positive")
        if self.scale < 1 or self.channels < 1 or self.hidden < 1:
            raise ValueError("scale, channels, and hidden must be positive")


@dataclass
class ReconResult:
    """Everything needed to inspect a run or warm-start the next frame."""

    volume: IntensityVolume
    zernike_estimate: ZernikeState
    loss_trace: list[LossReport]
    wall_time: float
    features: FeatureVolume
    decoder: Decoder
    pupils: ComplexPupil
    basis: ZernikePhaseBasis

    def monotonicity_violations(self, window: int = 50) -> np.ndarray:
        """Iterations whose total loss exceeds the total from ``window``
        iterations earlier. Expected empty on noiseless synthetic inputs;
        a soft diagnostic, not an error."""
        totals = np.array([r.total for r in self.loss_trace])
        if totals.size <= window:
            return np.array([], dtype=int)
        return np.nonzero(totals[window:] > totals[:-window])[0] + window


@dataclass
class GradientCheckReport:
    """Max relative disagreement between analytic and central-difference
    gradients, per parameter group; groups not optimized are skipped."""

    max_rel_err: dict[str, float]
    skipped: tuple[str, ...]
    tolerance: float = 1e-5

    @property
    def passed(self) -> bool:
        return all(v < self.tolerance for v in self.max_rel_err.values())

    def lines(self) -> list[str]:
        out = [
            f"{name}: max rel err {err:.3e} "
            f"({'ok' if err < self.tolerance else 'FAIL'})"
            for name, err in self.max_rel_err.items()
        ]
        out.extend(f"{name}: skipped" for name in self.skipped)
        return out


class Adam:
    """Adam with bias correction; one instance per parameter array."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self._m = 0.0
        self._v = 0.0
        self._t = 0

    def step(self, value, grad):
        self._t += 1
        self._m = self.beta1 * self._m + (1 - self.beta1) * grad
        self._v = self.beta2 * self._v + (1 - self.beta2) * grad * grad
        m_hat = self._m / (1 - self.beta1**self._t)
        v_hat = self._v / (1 - self.beta2**self._t)
        return value - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _psf_upstream(grad_lf: np.ndarray, vol_data: np.ndarray) -> np.ndarray:
    """Gradient of the projection w.r.t. the PSF slices: per-(u, z)
    correlation of the light-field gradient with the volume plane, shifted
    back to the centered PSF convention."""
    lf_spec = np.fft.fft2(grad_lf, axes=(-2, -1))
    vol_spec = np.fft.fft2(np.moveaxis(vol_data, -1, 0), axes=(-2, -1))
    corr = np.fft.ifft2(
        lf_spec[:, None] * np.conj(vol_spec)[None], axes=(-2, -1)
    ).real
    return np.fft.fftshift(corr, axes=(-2, -1))


def _evaluate(features, dec, scale, psfs, lf_meas, weights, variant):
    """Forward pass through decode -> pool -> project -> objective."""
    super_vol, cache = decode_forward(features, dec)
    vol = downsample(super_vol, scale)
    lf_sim = project(vol, psfs)
    report, grad_lf, grad_vol_reg = total_loss(
        lf_sim.data, lf_meas, vol.data, weights, variant
    )
    return report, vol, grad_lf, grad_vol_reg, cache


def _optimize(lf_meas, pupils, basis, config, features, dec, zstate,
              iterations):
    """Shared loop body for cold and warm starts. Mutates features, dec,
    and zstate in place; returns the loss trace."""
    meas = lf_meas.data
    scale = features.scale
    opt_feat = Adam(config.field_lr, config.beta1, config.beta2, config.eps)
    opt_dec = {
        name: Adam(config.decoder_lr, config.beta1, config.beta2, config.eps)
        for name in ("w1", "b1", "w2", "b2")
    }
    opt_z = Adam(config.zernike_lr, config.beta1, config.beta2, config.eps)
    warmup = int(round(DAO_WARMUP_FRACTION * iterations))

    trace: list[LossReport] = []
    csv_file = open(config.trace_csv, "w") if config.trace_csv else None
    psfs = synthesize_psf(pupils, basis, zstate)
    try:
        if csv_file:
            csv_file.write(LOSS_CSV_HEADER + "\n")
        for t in range(iterations):
            # overflow here is not an error: the guard below turns a
            # non-finite total into a DivergenceError with the iteration
            with np.errstate(over="ignore", invalid="ignore"):
                report, vol, grad_lf, grad_vol_reg, cache = _evaluate(
                    features, dec, scale, psfs, meas, config.weights,
                    config.fft_variant,
                )
            trace.append(report)
            if csv_file:
                csv_file.write(report.csv_row(t) + "\n")
            if not np.isfinite(report.total):
                raise DivergenceError(t)

            grad_vol = (
                project_adjoint(LightFieldStack(grad_lf), psfs).data
                + grad_vol_reg
            )
            grad_super = downsample_vjp(grad_vol, scale)
            grad_feat, dec_grads = decode_vjp(features, dec, grad_super,
                                              cache)

            features.features = opt_feat.step(features.features, grad_feat)
            dec.w1 = opt_dec["w1"].step(dec.w1, dec_grads.w1)
            dec.b1 = opt_dec["b1"].step(dec.b1, dec_grads.b1)
            dec.w2 = opt_dec["w2"].step(dec.w2, dec_grads.w2)
            dec.b2 = float(opt_dec["b2"].step(dec.b2, dec_grads.b2))

            if config.dao_enabled and t >= warmup:
                grad_psf = _psf_upstream(grad_lf, vol.data)
                grad_z = psf_vjp(pupils, basis, zstate, grad_psf)
                zstate.coeffs = opt_z.step(zstate.coeffs, grad_z)
                psfs = synthesize_psf(pupils, basis, zstate)

            if (
                config.checkpoint_path
                and config.checkpoint_every > 0
                and (t + 1) % config.checkpoint_every == 0
            ):
                from .rawio import write_checkpoint

                write_checkpoint(config.checkpoint_path, features, dec, zstate)
        if config.checkpoint_path:
            from .rawio import write_checkpoint

            write_checkpoint(config.checkpoint_path, features, dec, zstate)
    finally:
        if csv_file:
            csv_file.close()
    return trace


def _check_measurement(lf_meas: LightFieldStack, pupils: ComplexPupil) -> None:
    if not np.all(np.isfinite(lf_meas.data)):
        raise ValueError("measured light field contains NaN or Inf")
    u, x, y = lf_meas.data.shape
    if u != pupils.view_count:
        raise ValueError(
            f"measurement has {u} views, pupils have {pupils.view_count}"
        )
    if (x, y) != pupils.grid.shape:
        raise ValueError(
            f"measurement lateral shape {(x, y)} does not match pupil grid "
            f"{pupils.grid.shape}"
        )


def reconstruct(
    lf_meas: LightFieldStack,
    pupils: ComplexPupil,
    basis: ZernikePhaseBasis,
    config: ReconConfig = ReconConfig(),
) -> ReconResult:
    """Fit a fresh feature volume (and, if enabled, the aberration
    coefficients) to the measured projections.

    The target volume shape is inferred: lateral size from the measurement,
    depth count from the pupils.
    """
    _check_measurement(lf_meas, pupils)
    _, x, y = lf_meas.data.shape
    shape = (x, y, pupils.depth_count)
    features, dec = init_field(
        shape, channels=config.channels, scale=config.scale,
        seed=config.seed, hidden=config.hidden,
    )
    zstate = ZernikeState.zeros(basis.order_count)
    start = time.perf_counter()
    trace = _optimize(lf_meas, pupils, basis, config, features, dec, zstate,
                      config.iterations)
    wall = time.perf_counter() - start
    volume = downsample(decode(features, dec), config.scale)
    return ReconResult(
        volume=volume, zernike_estimate=zstate, loss_trace=trace,
        wall_time=wall, features=features, decoder=dec, pupils=pupils,
        basis=basis,
    )


def reconstruct_warmstart(
    lf_meas: LightFieldStack,
    previous: ReconResult,
    config: ReconConfig = ReconConfig(),
) -> ReconResult:
    """Continue from a previous result for ``config.warmstart_iterations``
    iterations — the fast path for subsequent frames of a sequence."""
    pupils, basis = previous.pupils, previous.basis
    _check_measurement(lf_meas, pupils)
    _, x, y = lf_meas.data.shape
    scale = previous.features.scale
    expected = (scale * x, scale * y, scale * pupils.depth_count)
    if previous.features.features.shape[:3] != expected:
        raise ValueError(
            f"previous feature grid {previous.features.features.shape[:3]} "
            f"is incompatible with expected {expected}"
        )
    features = FeatureVolume(previous.features.features.copy(), scale=scale)
    dec = replace(
        previous.decoder,
        w1=previous.decoder.w1.copy(), b1=previous.decoder.b1.copy(),
        w2=previous.decoder.w2.copy(),
    )
    zstate = previous.zernike_estimate.copy()
    start = time.perf_counter()
    trace = _optimize(lf_meas, pupils, basis, config, features, dec, zstate,
                      config.warmstart_iterations)
    wall = time.perf_counter() - start
    volume = downsample(decode(features, dec), scale)
    return ReconResult(
        volume=volume, zernike_estimate=zstate, loss_trace=trace,
        wall_time=wall, features=features, decoder=dec, pupils=pupils,
        basis=basis,
    )


def rld(
    lf_meas: LightFieldStack,
    psfs: PsfStack,
    iterations: int,
    init: IntensityVolume | None = None,
) -> IntensityVolume:
    """Multi-view Richardson-Lucy deconvolution baseline.

    Multiplicative updates I <- I * adjoint(meas / project(I)) / adjoint(1);
    the volume stays elementwise nonnegative, and denominators are guarded
    by a small epsilon.
    """
    meas = lf_meas.data
    if np.any(meas < 0):
        raise ValueError("measurements must be nonnegative for RLD")
    if iterations < 0:
        raise ValueError("iterations must be nonnegative")
    x, y = meas.shape[-2:]
    shape = (x, y, psfs.depth_count)
    if init is None:
        vol = np.full(shape, meas.mean() if meas.size else 1.0)
        vol = np.maximum(vol, 1.0e-3)
    else:
        if init.shape != shape:
            raise ValueError(
                f"init shape {init.shape} does not match expected {shape}"
            )
        if np.any(init.data < 0):
            # zeros are allowed and simply stay zero under the
            # multiplicative updates
            raise ValueError("init must be nonnegative")
        vol = init.data.copy()

    ones = LightFieldStack(np.ones_like(meas))
    norm = np.maximum(project_adjoint(ones, psfs).data, 0.0)
    for _ in range(iterations):
        sim = np.maximum(project(IntensityVolume(vol), psfs).data, 0.0)
        ratio = LightFieldStack(meas / (sim + RLD_EPS))
        correction = np.maximum(project_adjoint(ratio, psfs).data, 0.0)
        vol = vol * correction / (norm + RLD_EPS)
    return IntensityVolume(data=vol)


def _chain_loss(feat_arr, dec, zcoeffs, pupils, basis, scale, meas, weights,
                variant):
    """Scalar objective as a function of raw parameter arrays; used by the
    finite-difference checker."""
    features = FeatureVolume(feat_arr, scale=scale)
    zstate = ZernikeState(zcoeffs)
    psfs = synthesize_psf(pupils, basis, zstate)
    report, *_ = _evaluate(features, dec, scale, psfs, meas, weights,
                                variant)
    return report.total


def gradient_check(config: ReconConfig = ReconConfig(),
                   seed: int = 0) -> GradientCheckReport:
    """Certify the composed backward pass on a tiny random scene.

    Compares the analytic gradient of the full objective against central
    finite differences for a random sample of coordinates in every
    parameter group. Relative error is normalized by the largest gradient
    magnitude in the group.
    """
    from .optics import GridSpec, make_pupils, sunflower_views, zernike_basis

    rng = np.random.default_rng(seed)
    grid = GridSpec(nx=16, ny=16, pixel_size=0.3)
    views = sunflower_views(3, sub_aperture_radius=0.4)
    pupils = make_pupils(grid, views, [-1.0, 0.0, 1.0])
    basis = zernike_basis(grid, 6)

    truth = rng.random((16, 16, 3))
    true_state = ZernikeState(rng.normal(0.0, 0.2, 6))
    meas = project(IntensityVolume(truth),
                   synthesize_psf(pupils, basis, true_state)).data

    features, dec = init_field((16, 16, 3), channels=config.channels,
                               scale=config.scale, seed=seed,
                               hidden=config.hidden)
    features.features = rng.normal(0.0, 0.5, features.features.shape)
    zstate = ZernikeState(rng.normal(0.0, 0.2, 6))
    scale = config.scale

    psfs = synthesize_psf(pupils, basis, zstate)
    report, vol, grad_lf, grad_vol_reg, _ = _evaluate(
        features, dec, scale, psfs, meas, config.weights, config.fft_variant
    )
    grad_vol = project_adjoint(LightFieldStack(grad_lf), psfs).data
    grad_vol = grad_vol + grad_vol_reg
    grad_super = downsample_vjp(grad_vol, scale)
    grad_feat, dec_grads = decode_vjp(features, dec, grad_super)
    grad_z = psf_vjp(pupils, basis, zstate, _psf_upstream(grad_lf, vol.data))

    groups = {
        "features": (features.features, grad_feat),
        "decoder.w1": (dec.w1, dec_grads.w1),
        "decoder.b1": (dec.b1, dec_grads.b1),
        "decoder.w2": (dec.w2, dec_grads.w2),
        "decoder.b2": (np.atleast_1d(np.float64(dec.b2)),
                       np.atleast_1d(np.float64(dec_grads.b2))),
    }
    skipped: tuple[str, ...] = ()
    if config.dao_enabled:
        groups["zernike"] = (zstate.coeffs, grad_z)
    else:
        skipped = ("zernike",)

    def loss_with(name: str, flat: np.ndarray, shape) -> float:
        feat_arr, patched_dec, zcoeffs = features.features, dec, zstate.coeffs
        if name == "features":
            feat_arr = flat.reshape(shape)
        elif name == "zernike":
            zcoeffs = flat
        else:
            attr = name.split(".")[1]
            patched_dec = replace(dec)
            setattr(patched_dec, attr,
                    float(flat[0]) if attr == "b2" else flat.reshape(shape))
        return _chain_loss(feat_arr, patched_dec, zcoeffs, pupils, basis,
                           scale, meas, config.weights, config.fft_variant)

    def central_slope(name, flat, shape, idx, h) -> float:
        plus, minus = flat.copy(), flat.copy()
        plus[idx] += h
        minus[idx] -= h
        return (loss_with(name, plus, shape)
                - loss_with(name, minus, shape)) / (2 * h)

    step = 1e-6
    errors: dict[str, float] = {}
    for name, (value, grad) in groups.items():
        flat = np.array(value, dtype=float).ravel()
        shape = np.shape(value)
        analytic_all = np.asarray(grad, dtype=float).ravel()
        scale_hint = max(np.abs(analytic_all).max(), 1e-8)
        count = min(flat.size, 12)
        order = rng.permutation(flat.size)
        picks: list[int] = []
        fd: list[float] = []
        for idx in order:
            if len(picks) == count:
                break
            # The objective is only piecewise smooth (leaky units, hinge
            # penalty), so a stencil straddling a kink poisons the central
            # difference. Two step sizes agree to O(h^2) on smooth ground
            # but disagree at O(1) across a kink: shrink until they agree,
            # otherwise skip the coordinate.
            for h in (step, step / 4, step / 16):
                coarse = central_slope(name, flat, shape, idx, h)
                fine = central_slope(name, flat, shape, idx, h / 2)
                tol = 1e-3 * max(abs(coarse), abs(fine), 1e-6 * scale_hint)
                if abs(coarse - fine) <= tol:
                    picks.append(int(idx))
                    fd.append(fine)
                    break
        if not picks:
            raise RuntimeError(
                f"gradient check could not find a smooth probe for {name}"
            )
        fd_arr = np.asarray(fd)
        analytic = analytic_all[picks]
        denom = max(np.abs(analytic).max(), np.abs(fd_arr).max(), 1e-8)
        errors[name] = float(np.abs(analytic - fd_arr).max() / denom)
    return GradientCheckReport(max_rel_err=errors, skipped=skipped)
