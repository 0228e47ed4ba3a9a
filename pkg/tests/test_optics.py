"""Pupil and PSF synthesis tests.

Derived oracles: disk quadrature for Zernike orthogonality, brute-force
translation for the tilt theorem, central finite differences for the
coefficient gradient.
"""

import numpy as np
import pytest

from lfmrecon.optics import (
    GridSpec,
    ViewSpec,
    ZernikeState,
    make_pupils,
    osa_index_to_nm,
    psf_vjp,
    sunflower_views,
    synthesize_psf,
    zernike_basis,
)


def small_grid(nx=32, px=0.3):
    return GridSpec(nx=nx, ny=nx, pixel_size=px)


def on_axis_views(radius=0.6):
    return ViewSpec(offsets=np.zeros((1, 2)), sub_aperture_radius=radius)


class TestGridSpec:
    def test_rejects_odd_and_tiny_grids(self):
        with pytest.raises(ValueError):
            GridSpec(nx=31, ny=32, pixel_size=0.3)
        with pytest.raises(ValueError):
            GridSpec(nx=6, ny=6, pixel_size=0.3)

    def test_rejects_na_at_or_above_index(self):
        with pytest.raises(ValueError):
            GridSpec(nx=32, ny=32, pixel_size=0.3, numerical_aperture=1.4,
                     refractive_index=1.33)
        with pytest.raises(ValueError):
            GridSpec(nx=32, ny=32, pixel_size=0.3, numerical_aperture=0.0)

    def test_cutoff_frequency(self):
        g = GridSpec(nx=32, ny=32, pixel_size=0.3, wavelength=0.92,
                     numerical_aperture=1.05)
        assert g.cutoff_frequency == pytest.approx(1.05 / 0.92)


class TestOsaIndexing:
    def test_known_pairs(self):
        expected = {0: (0, 0), 1: (1, -1), 2: (1, 1), 3: (2, -2), 4: (2, 0),
                    5: (2, 2), 6: (3, -3), 9: (3, 3), 12: (4, 0), 24: (6, 0)}
        for j, nm in expected.items():
            assert osa_index_to_nm(j) == nm

    def test_index_roundtrip(self):
        for j in range(66):
            n, m = osa_index_to_nm(j)
            assert (n * (n + 2) + m) // 2 == j
            assert (n - abs(m)) % 2 == 0


class TestZernikeBasis:
    def test_piston_constant_inside_disk(self):
        grid = GridSpec(nx=256, ny=256, pixel_size=0.4)
        basis = zernike_basis(grid, 1)
        disk = basis.disk
        np.testing.assert_allclose(basis.maps[0][disk], 1.0)
        np.testing.assert_allclose(basis.maps[0][~disk], 0.0)

    def test_tilt_vanishes_at_center(self):
        grid = GridSpec(nx=256, ny=256, pixel_size=0.4)
        basis = zernike_basis(grid, 5)
        cx, cy = grid.nx // 2, grid.ny // 2
        assert basis.maps[1][cx, cy] == 0.0
        assert basis.maps[2][cx, cy] == 0.0

    def test_defocus_matches_closed_form(self):
        grid = GridSpec(nx=256, ny=256, pixel_size=0.4)
        basis = zernike_basis(grid, 5)
        rx, ry = grid.pupil_coords()
        rho2 = rx**2 + ry**2
        expected = np.where(rho2 <= 1, np.sqrt(3.0) * (2 * rho2 - 1), 0.0)
        np.testing.assert_allclose(basis.maps[4], expected, atol=1e-12)

    def test_disk_orthonormality_quadrature(self):
        # Oracle: mean over disk pixels of Z_j * Z_k approximates the
        # normalized disk integral, which is the identity for an
        # RMS-normalized basis.
        grid = GridSpec(nx=512, ny=512, pixel_size=0.4)
        basis = zernike_basis(grid, 15)
        disk = basis.disk
        flat = basis.maps[:, disk]
        gram = flat @ flat.T / disk.sum()
        assert np.abs(gram - np.eye(15)).max() < 1e-2

    def test_rejects_bad_order_counts(self):
        grid = small_grid()
        with pytest.raises(ValueError):
            zernike_basis(grid, 0)
        with pytest.raises(ValueError):
            zernike_basis(grid, 67)


class TestZernikeState:
    def test_piston_always_masked(self):
        state = ZernikeState(np.zeros(6))
        assert not state.trainable_mask[0]
        assert state.trainable_mask[1:].all()
        state = ZernikeState(np.zeros(6), trainable_mask=np.ones(6, dtype=bool))
        assert not state.trainable_mask[0]

    def test_mask_shape_checked(self):
        with pytest.raises(ValueError):
            ZernikeState(np.zeros(6), trainable_mask=np.ones(5, dtype=bool))


class TestViewSpec:
    def test_rejects_escaping_aperture(self):
        with pytest.raises(ValueError):
            ViewSpec(offsets=np.array([[0.8, 0.0]]), sub_aperture_radius=0.3)

    def test_sunflower_layout(self):
        views = sunflower_views(13, sub_aperture_radius=0.3)
        assert views.view_count == 13
        np.testing.assert_allclose(views.offsets[0], 0.0)
        reach = np.hypot(*views.offsets.T) + views.sub_aperture_radius
        assert np.all(reach <= 1 + 1e-12)
        # outermost ring touches the admissible boundary
        assert reach.max() == pytest.approx(1.0)


class TestMakePupils:
    def test_focal_plane_field_is_real_indicator(self):
        grid = small_grid()
        pupils = make_pupils(grid, on_axis_views(), [0.0])
        f = pupils.field[0, 0]
        np.testing.assert_allclose(f.imag, 0.0)
        assert set(np.unique(f.real)) <= {0.0, 1.0}
        assert f.real.sum() > 0

    def test_defocus_conjugate_pair(self):
        grid = small_grid()
        pupils = make_pupils(grid, on_axis_views(), [-2.0, 2.0])
        np.testing.assert_allclose(
            pupils.field[0, 0], np.conj(pupils.field[0, 1]), atol=1e-14
        )

    def test_offset_support_centroid(self):
        grid = GridSpec(nx=64, ny=64, pixel_size=0.3)
        views = ViewSpec(offsets=np.array([[0.4, -0.2]]), sub_aperture_radius=0.3)
        pupils = make_pupils(grid, views, [2.0])
        support = np.abs(pupils.field[0, 0]) > 0
        rx, ry = grid.pupil_coords()
        cx = rx[support].mean()
        cy = ry[support].mean()
        # normalized pupil width of one frequency pixel
        step = 1.0 / (grid.nx * grid.pixel_size * grid.cutoff_frequency)
        assert abs(cx - 0.4) < step
        assert abs(cy + 0.2) < step

    def test_rejects_pupil_beyond_nyquist(self):
        with pytest.raises(ValueError):
            make_pupils(GridSpec(nx=32, ny=32, pixel_size=0.6),
                        on_axis_views(), [0.0])

    def test_rejects_empty_depths(self):
        with pytest.raises(ValueError):
            make_pupils(small_grid(), on_axis_views(), [])


class TestSynthesizePsf:
    def test_unit_sum_and_nonnegative(self):
        grid = small_grid()
        views = sunflower_views(3, 0.3)
        pupils = make_pupils(grid, views, [-1.0, 0.0, 1.0])
        basis = zernike_basis(grid, 6)
        rng = np.random.default_rng(0)
        state = ZernikeState(rng.normal(0, 0.3, 6))
        stack = synthesize_psf(pupils, basis, state)
        assert stack.psf.shape == (3, 3, 32, 32)
        assert np.all(stack.psf >= 0)
        np.testing.assert_allclose(stack.psf.sum(axis=(-2, -1)), 1.0, atol=1e-12)

    def test_piston_invariance(self):
        grid = small_grid()
        pupils = make_pupils(grid, on_axis_views(), [0.0, 1.5])
        basis = zernike_basis(grid, 6)
        base = ZernikeState(np.array([0.0, 0.1, -0.2, 0.3, 0.05, 0.0]))
        shifted = base.copy()
        shifted.coeffs[0] = 3.7
        a = synthesize_psf(pupils, basis, base).psf
        b = synthesize_psf(pupils, basis, shifted).psf
        assert np.abs(a - b).max() < 1e-12

    def test_unaberrated_peak_at_center(self):
        grid = small_grid()
        pupils = make_pupils(grid, on_axis_views(), [0.0])
        basis = zernike_basis(grid, 1)
        psf = synthesize_psf(pupils, basis, ZernikeState.zeros(1)).psf[0, 0]
        assert np.unravel_index(psf.argmax(), psf.shape) == (16, 16)

    def test_axial_symmetry_of_unaberrated_psf(self):
        grid = small_grid()
        pupils = make_pupils(grid, on_axis_views(), [-2.0, 2.0])
        basis = zernike_basis(grid, 1)
        stack = synthesize_psf(pupils, basis, ZernikeState.zeros(1)).psf
        np.testing.assert_allclose(stack[0, 0], stack[0, 1], atol=1e-9)

    def test_tilt_translates_psf(self):
        # Oracle: brute-force circular shifts of the unaberrated PSF. A tilt
        # coefficient c = pi * f_c * pixel_size * s on the x tilt moves the
        # peak by exactly s pixels along x (sign is convention-dependent, so
        # both are tried).
        grid = small_grid(nx=32, px=0.3)
        pupils = make_pupils(grid, on_axis_views(0.8), [0.0])
        basis = zernike_basis(grid, 6)
        base = synthesize_psf(pupils, basis, ZernikeState.zeros(6)).psf[0, 0]
        shift = 3
        c = np.pi * grid.cutoff_frequency * grid.pixel_size * shift
        state = ZernikeState.zeros(6)
        state.coeffs[2] = c
        tilted = synthesize_psf(pupils, basis, state).psf[0, 0]
        errs = [
            np.abs(tilted - np.roll(base, sgn * shift, axis=0)).max()
            for sgn in (1, -1)
        ]
        assert min(errs) < 1e-10

    def test_empty_aperture_rejected(self):
        # radius so small no frequency sample falls inside the sub-aperture
        grid = small_grid(nx=16, px=0.4)
        views = ViewSpec(offsets=np.array([[0.5, 0.5]]), sub_aperture_radius=0.01)
        pupils = make_pupils(grid, views, [0.0])
        basis = zernike_basis(grid, 1)
        with pytest.raises(ValueError, match="empty aperture"):
            synthesize_psf(pupils, basis, ZernikeState.zeros(1))

    def test_grid_mismatch_rejected(self):
        pupils = make_pupils(small_grid(), on_axis_views(), [0.0])
        basis = zernike_basis(small_grid(nx=64), 3)
        with pytest.raises(ValueError):
            synthesize_psf(pupils, basis, ZernikeState.zeros(3))


class TestPsfVjp:
    def test_zero_upstream_gives_zero_gradient(self):
        grid = small_grid()
        pupils = make_pupils(grid, on_axis_views(), [0.0, 1.0])
        basis = zernike_basis(grid, 6)
        grad = psf_vjp(pupils, basis, ZernikeState.zeros(6),
                       np.zeros(pupils.field.shape))
        np.testing.assert_allclose(grad, 0.0)

    def test_piston_gradient_exactly_zero(self):
        grid = small_grid()
        pupils = make_pupils(grid, on_axis_views(), [0.5])
        basis = zernike_basis(grid, 6)
        rng = np.random.default_rng(3)
        state = ZernikeState(rng.normal(0, 0.2, 6))
        grad = psf_vjp(pupils, basis, state, rng.normal(size=pupils.field.shape))
        assert grad[0] == 0.0

    def test_matches_finite_differences(self):
        # Oracle: central differences of L(P) = sum(upstream * psf(P)).
        grid = GridSpec(nx=32, ny=32, pixel_size=0.3)
        views = sunflower_views(2, 0.4)
        pupils = make_pupils(grid, views, [-1.0, 1.5])
        basis = zernike_basis(grid, 6)
        rng = np.random.default_rng(7)
        state = ZernikeState(rng.normal(0, 0.3, 6))
        upstream = rng.normal(size=pupils.field.shape)
        grad = psf_vjp(pupils, basis, state, upstream)

        step = 1e-5
        for k in range(1, 6):
            plus, minus = state.copy(), state.copy()
            plus.coeffs[k] += step
            minus.coeffs[k] -= step
            lp = (upstream * synthesize_psf(pupils, basis, plus).psf).sum()
            lm = (upstream * synthesize_psf(pupils, basis, minus).psf).sum()
            fd = (lp - lm) / (2 * step)
            assert abs(grad[k] - fd) < 1e-5 * max(1.0, abs(fd))

    def test_upstream_shape_checked(self):
        grid = small_grid()
        pupils = make_pupils(grid, on_axis_views(), [0.0])
        basis = zernike_basis(grid, 3)
        with pytest.raises(ValueError):
            psf_vjp(pupils, basis, ZernikeState.zeros(3), np.zeros((2, 2)))
