"""Tour of the PSF synthesizer: parallax, defocus, and aberrations.

Each sub-aperture view sees the scene from a different pupil offset, so a
point source drifts laterally with depth at a view-specific rate; that
drift is the parallax the reconstruction engine inverts. Aberrations warp
every view's PSF in a way parallax cannot explain, which is what makes
them separable from the scene.

Run:  python3 demos/psf_zoo.py
"""

import numpy as np

from lfmrecon import (
    GridSpec,
    ZernikeState,
    make_pupils,
    sunflower_views,
    synthesize_psf,
    zernike_basis,
)


def centroid(image: np.ndarray) -> tuple[float, float]:
    xs, ys = np.indices(image.shape)
    total = image.sum()
    return float((xs * image).sum() / total), float((ys * image).sum() / total)


def main() -> None:
    grid = GridSpec(nx=64, ny=64, pixel_size=0.3)
    views = sunflower_views(5, sub_aperture_radius=0.3)
    depths = np.linspace(-2.0, 2.0, 5)
    pupils = make_pupils(grid, views, depths)
    basis = zernike_basis(grid, 15)

    psfs = synthesize_psf(pupils, basis, ZernikeState.zeros(15))
    print("view offsets (pupil units):")
    for u, (ox, oy) in enumerate(views.offsets):
        print(f"  view {u}: ({ox:+.3f}, {oy:+.3f})")

    print("\nPSF centroid drift with depth (pixels from center):")
    cx0, cy0 = grid.nx / 2, grid.ny / 2
    for u in range(views.view_count):
        drifts = []
        for iz, z in enumerate(depths):
            cx, cy = centroid(psfs.psf[u, iz])
            drifts.append(f"z={z:+.1f}: ({cx - cx0:+.2f}, {cy - cy0:+.2f})")
        print(f"  view {u}: " + "  ".join(drifts))
    print("the on-axis view stays put; off-axis views drift linearly, and")
    print("the drift direction follows the pupil offset.")

    aberrated = ZernikeState.zeros(15)
    aberrated.coeffs[4] = 1.0  # one radian of defocus
    psfs_ab = synthesize_psf(pupils, basis, aberrated)
    mid = len(depths) // 2
    print("\none radian of defocus, in-focus slice, clean -> aberrated:")
    for u in (0, views.view_count - 1):
        cx_a, cy_a = centroid(psfs.psf[u, mid])
        cx_b, cy_b = centroid(psfs_ab.psf[u, mid])
        width_a = np.sqrt((psfs.psf[u, mid]
                           * ((np.indices(grid.shape)[0] - cx_a) ** 2
                              + (np.indices(grid.shape)[1] - cy_a) ** 2)).sum())
        width_b = np.sqrt((psfs_ab.psf[u, mid]
                           * ((np.indices(grid.shape)[0] - cx_b) ** 2
                              + (np.indices(grid.shape)[1] - cy_b) ** 2)).sum())
        print(f"  view {u}: centroid shift ({cx_b - cx_a:+.2f}, "
              f"{cy_b - cy_a:+.2f}) px, RMS width "
              f"{width_a:.2f} -> {width_b:.2f} px")
    print("defocus barely widens these narrow sub-aperture PSFs; it mostly")
    print("shifts each off-axis view along its parallax axis, the same move")
    print("an extra micrometer of depth would make. Estimating it relies on")
    print("the weak higher-order residuals of that near-degeneracy.")


if __name__ == "__main__":
    main()
