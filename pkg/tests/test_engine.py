"""Engine tests: full-chain gradient certification, determinism, the
divergence guard, and the Richardson-Lucy baseline."""

import numpy as np
import pytest

from lfmrecon.engine import (
    DivergenceError,
    ReconConfig,
    ReconResult,
    gradient_check,
    reconstruct,
    reconstruct_warmstart,
    rld,
)
from lfmrecon.forward import IntensityVolume, LightFieldStack, project
from lfmrecon.losses import LossWeights
from lfmrecon.optics import (
    GridSpec,
    PsfStack,
    ViewSpec,
    ZernikeState,
    make_pupils,
    sunflower_views,
    synthesize_psf,
    zernike_basis,
)


def tiny_scene(u=2, z=2, nx=16, seed=0, aberration=None):
    grid = GridSpec(nx=nx, ny=nx, pixel_size=0.3)
    views = sunflower_views(u, sub_aperture_radius=0.4)
    pupils = make_pupils(grid, views, np.linspace(-1.0, 1.0, z))
    basis = zernike_basis(grid, 6)
    state = ZernikeState.zeros(6)
    if aberration is not None:
        state.coeffs[: len(aberration)] = aberration
    rng = np.random.default_rng(seed)
    truth = rng.random((nx, nx, z))
    psfs = synthesize_psf(pupils, basis, state)
    meas = project(IntensityVolume(truth), psfs)
    return grid, pupils, basis, meas, truth


def delta_stack(u, z, n):
    psf = np.zeros((u, z, n, n))
    psf[:, :, n // 2, n // 2] = 1.0
    return PsfStack(
        psf=psf,
        grid=GridSpec(nx=n, ny=n, pixel_size=0.3),
        views=ViewSpec(offsets=np.zeros((u, 2)), sub_aperture_radius=0.3),
        depths=np.arange(z, dtype=float),
    )


class TestGradientCheck:
    def test_all_groups_within_tolerance(self):
        report = gradient_check(ReconConfig(), seed=0)
        assert set(report.max_rel_err) == {
            "features", "decoder.w1", "decoder.b1", "decoder.w2",
            "decoder.b2", "zernike",
        }
        for name, err in report.max_rel_err.items():
            assert err < 1e-5, f"{name}: {err}"
        assert report.passed
        assert report.skipped == ()

    def test_dao_disabled_skips_zernike(self):
        report = gradient_check(ReconConfig(dao_enabled=False), seed=1)
        assert "zernike" not in report.max_rel_err
        assert report.skipped == ("zernike",)
        assert report.passed

    def test_report_lines_readable(self):
        report = gradient_check(ReconConfig(dao_enabled=False), seed=2)
        lines = report.lines()
        assert any("features" in line for line in lines)
        assert any("skipped" in line for line in lines)


class TestReconstructLoop:
    def test_smoke_shapes_and_trace(self):
        _, pupils, basis, meas, _ = tiny_scene()
        config = ReconConfig(iterations=10, dao_enabled=False, seed=3)
        result = reconstruct(meas, pupils, basis, config)
        assert result.volume.shape == (16, 16, 2)
        assert len(result.loss_trace) == 10
        assert result.zernike_estimate.coeffs.shape == (6,)
        assert result.wall_time > 0

    def test_deterministic_traces(self):
        _, pupils, basis, meas, _ = tiny_scene()
        config = ReconConfig(iterations=15, seed=4)
        a = reconstruct(meas, pupils, basis, config)
        b = reconstruct(meas, pupils, basis, config)
        totals_a = [r.total for r in a.loss_trace]
        totals_b = [r.total for r in b.loss_trace]
        assert totals_a == totals_b
        np.testing.assert_array_equal(a.volume.data, b.volume.data)

    def test_loss_decreases_overall(self):
        _, pupils, basis, meas, _ = tiny_scene()
        config = ReconConfig(iterations=60, dao_enabled=False, seed=5)
        result = reconstruct(meas, pupils, basis, config)
        assert result.loss_trace[-1].total < result.loss_trace[0].total

    def test_divergence_guard_reports_iteration(self):
        _, pupils, basis, meas, _ = tiny_scene()
        config = ReconConfig(iterations=50, field_lr=1e160, dao_enabled=False)
        with pytest.raises(DivergenceError, match="iteration") as err:
            reconstruct(meas, pupils, basis, config)
        assert err.value.iteration >= 1

    def test_trace_csv_written(self, tmp_path):
        _, pupils, basis, meas, _ = tiny_scene()
        path = tmp_path / "trace.csv"
        config = ReconConfig(iterations=5, dao_enabled=False,
                             trace_csv=str(path))
        reconstruct(meas, pupils, basis, config)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "iteration,mse,fft,ztv,pos,total"
        assert len(lines) == 6

    def test_measurement_validation(self):
        _, pupils, basis, meas, _ = tiny_scene()
        bad = LightFieldStack(np.full((2, 16, 16), np.nan))
        with pytest.raises(ValueError, match="NaN"):
            reconstruct(bad, pupils, basis, ReconConfig(iterations=1))
        wrong_views = LightFieldStack(np.zeros((5, 16, 16)))
        with pytest.raises(ValueError, match="views"):
            reconstruct(wrong_views, pupils, basis, ReconConfig(iterations=1))


class TestWarmstart:
    def test_continues_from_previous_state(self):
        _, pupils, basis, meas, _ = tiny_scene()
        cold = reconstruct(meas, pupils, basis,
                           ReconConfig(iterations=40, dao_enabled=False, seed=6))
        warm = reconstruct_warmstart(
            meas, cold,
            ReconConfig(warmstart_iterations=10, dao_enabled=False, seed=6),
        )
        # warm start on the identical frame never ends above its own start
        assert warm.loss_trace[-1].total <= warm.loss_trace[0].total
        # and resumes where the cold run left off, not from scratch
        assert warm.loss_trace[0].total <= cold.loss_trace[-1].total * 1.05
        assert warm.loss_trace[0].total < cold.loss_trace[0].total

    def test_shape_mismatch_rejected(self):
        _, pupils, basis, meas, _ = tiny_scene()
        cold = reconstruct(meas, pupils, basis,
                           ReconConfig(iterations=5, dao_enabled=False))
        _, _, _, wide_meas, _ = tiny_scene(nx=32)
        with pytest.raises(ValueError, match="grid"):
            reconstruct_warmstart(wide_meas, cold,
                                  ReconConfig(warmstart_iterations=5))
        from lfmrecon.field import FeatureVolume

        cold.features = FeatureVolume(np.zeros((10, 10, 4, 3)))
        with pytest.raises(ValueError, match="incompatible"):
            reconstruct_warmstart(meas, cold,
                                  ReconConfig(warmstart_iterations=5))


class TestReconConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            ReconConfig(iterations=0)
        with pytest.raises(ValueError):
            ReconConfig(field_lr=0.0)
        with pytest.raises(ValueError):
            ReconConfig(scale=0)

    def test_monotonicity_flagging(self):
        _, pupils, basis, meas, _ = tiny_scene()
        result = reconstruct(meas, pupils, basis,
                             ReconConfig(iterations=8, dao_enabled=False))
        flags = result.monotonicity_violations(window=50)
        assert flags.size == 0  # trace shorter than the window


class TestRld:
    def test_delta_psf_fixed_point_in_one_iteration(self):
        rng = np.random.default_rng(7)
        meas = rng.random((1, 8, 8)) + 0.5
        vol = rld(LightFieldStack(meas), delta_stack(1, 1, 8), 1)
        np.testing.assert_allclose(vol.data[:, :, 0], meas[0], rtol=1e-9)

    def test_output_nonnegative(self):
        rng = np.random.default_rng(8)
        stack = delta_stack(2, 2, 8)
        psf = rng.random((2, 2, 8, 8))
        psf /= psf.sum(axis=(-2, -1), keepdims=True)
        stack = PsfStack(psf=psf, grid=stack.grid, views=stack.views,
                         depths=stack.depths)
        meas = rng.random((2, 8, 8))
        vol = rld(LightFieldStack(meas), stack, 20)
        assert vol.data.min() >= 0

    def test_error_decreases_on_consistent_measurement(self):
        rng = np.random.default_rng(9)
        stack_psf = rng.random((3, 2, 8, 8))
        stack_psf /= stack_psf.sum(axis=(-2, -1), keepdims=True)
        stack = PsfStack(
            psf=stack_psf,
            grid=GridSpec(nx=8, ny=8, pixel_size=0.3),
            views=ViewSpec(offsets=np.zeros((3, 2)), sub_aperture_radius=0.3),
            depths=np.arange(2, dtype=float),
        )
        truth = rng.random((8, 8, 2))
        meas = project(IntensityVolume(truth), stack)
        errors = []
        vol = None
        for total in (10, 20, 40):
            vol = rld(meas, stack, total)
            errors.append(np.linalg.norm(vol.data - truth) /
                          np.linalg.norm(truth))
        assert errors[2] < errors[1] < errors[0]

    def test_negative_measurement_rejected(self):
        meas = np.zeros((1, 8, 8))
        meas[0, 0, 0] = -1e-3
        with pytest.raises(ValueError, match="nonnegative"):
            rld(LightFieldStack(meas), delta_stack(1, 1, 8), 1)

    def test_bad_init_rejected(self):
        meas = LightFieldStack(np.ones((1, 8, 8)))
        stack = delta_stack(1, 2, 8)
        with pytest.raises(ValueError, match="nonnegative"):
            rld(meas, stack, 1,
                init=IntensityVolume(np.full((8, 8, 2), -1.0)))
        with pytest.raises(ValueError, match="shape"):
            rld(meas, stack, 1, init=IntensityVolume(np.ones((8, 8, 3))))

    def test_zero_init_entries_stay_zero(self):
        # zeros are fixed points of the multiplicative update, so an
        # all-zero init is legal and must come back unchanged
        meas = LightFieldStack(np.ones((1, 8, 8)))
        stack = delta_stack(1, 2, 8)
        out = rld(meas, stack, 3, init=IntensityVolume(np.zeros((8, 8, 2))))
        assert np.array_equal(out.data, np.zeros((8, 8, 2)))
