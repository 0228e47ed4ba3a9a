"""Command-line interface for the reconstruction pipeline.

Exit codes: 0 on success, 2 on validation problems (bad flags, bad files,
inconsistent shapes), 3 when the optimizer diverges.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import fields as dataclass_fields
from pathlib import Path

import numpy as np

from .engine import (
    DivergenceError,
    ReconConfig,
    ReconResult,
    gradient_check,
    reconstruct,
    reconstruct_warmstart,
    rld,
)
from .forward import downsample, project
from .field import decode
from .losses import LossWeights
from .metrics import psnr, ssim
from .optics import (
    GridSpec,
    ViewSpec,
    ZernikeState,
    make_pupils,
    sunflower_views,
    synthesize_psf,
    zernike_basis,
)
from .phantoms import PhantomSpec, make_phantom
from .rawio import (
    read_checkpoint,
    read_lightfield,
    read_meta,
    read_psf_stack,
    read_raw,
    read_volume,
    write_lightfield,
    write_psf_stack,
    write_volume,
)
from .spectrum import band_energy_ratio, spectrum_plot

__all__ = ["main"]


def _parse_numbers(text: str, kind=float) -> list:
    try:
        return [kind(part) for part in text.split(",") if part != ""]
    except ValueError as exc:
        raise ValueError(f"could not parse {text!r} as numbers") from exc


def _parse_shape(text: str) -> tuple[int, int, int]:
    values = _parse_numbers(text, int)
    if len(values) != 3:
        raise ValueError(f"shape must be X,Y,Z, got {text!r}")
    return tuple(values)


def _parse_depths(text: str) -> np.ndarray:
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError("depth range must be start:stop:count")
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
        if count < 1:
            raise ValueError("depth count must be at least 1")
        return np.linspace(start, stop, count)
    return np.array(_parse_numbers(text), dtype=float)


def _parse_grid(text: str) -> GridSpec:
    values = _parse_numbers(text)
    if len(values) < 3:
        raise ValueError("grid must be nx,ny,pixel_size[,wavelength,na,index]")
    keys = ("wavelength", "numerical_aperture", "refractive_index")
    extra = dict(zip(keys, values[3:]))
    return GridSpec(nx=int(values[0]), ny=int(values[1]),
                    pixel_size=values[2], **extra)


def _parse_views(text: str) -> ViewSpec:
    values = _parse_numbers(text)
    count = int(values[0])
    radius = values[1] if len(values) > 1 else 0.3
    return sunflower_views(count, sub_aperture_radius=radius)


def _parse_zernike(text: str, minimum: int) -> ZernikeState:
    coeffs = {}
    if text:
        for pair in text.split(","):
            if not pair:
                continue
            if "=" not in pair:
                raise ValueError(f"aberration terms look like j=value, got "
                                 f"{pair!r}")
            idx, value = pair.split("=", 1)
            coeffs[int(idx)] = float(value)
    order = max([minimum] + [j + 1 for j in coeffs])
    state = ZernikeState.zeros(order)
    for j, value in coeffs.items():
        state.coeffs[j] = value
    return state


def _build_optics(conf: dict):
    try:
        grid = GridSpec(**conf["grid"])
        views_conf = conf["views"]
        if isinstance(views_conf, dict):
            if "offsets" in views_conf:
                views = ViewSpec(
                    offsets=np.array(views_conf["offsets"], dtype=float),
                    sub_aperture_radius=views_conf["sub_aperture_radius"],
                )
            else:
                views = sunflower_views(
                    views_conf["count"],
                    sub_aperture_radius=views_conf.get(
                        "sub_aperture_radius", 0.3),
                )
        else:
            views = sunflower_views(int(views_conf))
        depths = np.array(conf["depths"], dtype=float)
    except KeyError as exc:
        raise ValueError(f"psf config is missing {exc.args[0]!r}") from exc
    pupils = make_pupils(grid, views, depths)
    basis = zernike_basis(grid, int(conf.get("zernike_count", 15)))
    return pupils, basis


def _load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: not valid JSON ({exc})") from exc


def _config_from_json(conf: dict) -> ReconConfig:
    known = {f.name for f in dataclass_fields(ReconConfig)}
    unknown = set(conf) - known
    if unknown:
        raise ValueError(f"unknown config fields: {sorted(unknown)}")
    conf = dict(conf)
    if "weights" in conf:
        conf["weights"] = LossWeights(**conf["weights"])
    return ReconConfig(**conf)


def cmd_phantom(args) -> int:
    spec = PhantomSpec(
        kind=args.kind,
        count=args.count,
        radius=args.radius,
        pitches=tuple(_parse_numbers(args.pitches, int)),
        seed=args.seed,
        margin=args.margin,
    )
    vol = make_phantom(spec, _parse_shape(args.shape))
    write_volume(args.out, vol,
                 note=f"phantom kind={args.kind} seed={args.seed}")
    print(f"wrote {args.out}: {args.kind} phantom {vol.shape}, "
          f"peak {vol.data.max():.3f}")
    return 0


def cmd_psf(args) -> int:
    grid = _parse_grid(args.grid)
    views = _parse_views(args.views)
    depths = _parse_depths(args.depths)
    state = _parse_zernike(args.zernike, minimum=args.order)
    pupils = make_pupils(grid, views, depths)
    basis = zernike_basis(grid, state.coeffs.size)
    psfs = synthesize_psf(pupils, basis, state)
    write_psf_stack(args.out, psfs, note=f"zernike={args.zernike or 'none'}")
    print(f"wrote {args.out}: PSF stack views={views.view_count} "
          f"depths={len(depths)} grid={grid.nx}x{grid.ny}")
    return 0


def cmd_project(args) -> int:
    vol = read_volume(args.volume)
    psfs = read_psf_stack(args.psf)
    lf = project(vol, psfs)
    write_lightfield(args.out, lf, note=f"projected from {args.volume}")
    print(f"wrote {args.out}: light field {lf.data.shape}")
    return 0


def cmd_reconstruct(args) -> int:
    lf = read_lightfield(args.lf)
    pupils, basis = _build_optics(_load_json(args.psf_config))
    config = _config_from_json(_load_json(args.config)) if args.config \
        else ReconConfig()
    if args.dao is not None:
        config.dao_enabled = args.dao == "on"
    if args.fft_variant is not None:
        config.fft_variant = args.fft_variant
    if args.trace_csv:
        config.trace_csv = args.trace_csv

    if args.warmstart:
        features, dec, zstate = read_checkpoint(args.warmstart)
        previous = ReconResult(
            volume=downsample(decode(features, dec), features.scale),
            zernike_estimate=zstate,
            loss_trace=[],
            wall_time=0.0,
            features=features,
            decoder=dec,
            pupils=pupils,
            basis=basis,
        )
        result = reconstruct_warmstart(lf, previous, config)
    else:
        result = reconstruct(lf, pupils, basis, config)

    write_volume(args.out, result.volume, note="reconstruction")
    active = np.flatnonzero(np.abs(result.zernike_estimate.coeffs) > 1e-3)
    summary = ", ".join(
        f"P{j}={result.zernike_estimate.coeffs[j]:+.3f}" for j in active
    ) or "none above 1e-3 rad"
    print(f"wrote {args.out}: volume {result.volume.shape}")
    print(f"final loss {result.loss_trace[-1].total:.6e} "
          f"after {len(result.loss_trace)} iterations "
          f"({result.wall_time:.1f}s)")
    print(f"aberration estimate: {summary}")
    return 0


def cmd_rld(args) -> int:
    lf = read_lightfield(args.lf)
    psfs = read_psf_stack(args.psf)
    start = time.perf_counter()
    vol = rld(lf, psfs, args.iters)
    wall = time.perf_counter() - start
    write_volume(args.out, vol, note=f"rld iters={args.iters}")
    print(f"wrote {args.out}: volume {vol.shape} ({wall:.1f}s)")
    return 0


def cmd_metrics(args) -> int:
    recon = read_volume(args.recon)
    reference = read_volume(args.reference)
    peak = float(reference.data.max())
    value_psnr = psnr(recon.data, reference.data)
    value_ssim = ssim(recon.data, reference.data)
    rows = [
        ("psnr_db", value_psnr, f"peak=max(reference)={peak:.6g}"),
        ("ssim", value_ssim,
         f"window={11}, sigma=1.5, data_range=max(reference)={peak:.6g}"),
    ]
    for name, value, note in rows:
        print(f"{name}={value:.4f} [{note}]")
    if args.report_csv:
        lines = ["metric,value,normalization"]
        lines += [f"{name},{value:.10g},{note}" for name, value, note in rows]
        Path(args.report_csv).write_text("\n".join(lines) + "\n")
        print(f"wrote {args.report_csv}")
    return 0


def cmd_spectrum(args) -> int:
    data = read_raw(args.image)
    if data.ndim == 3:
        kind = read_meta(args.image).get("kind", "lightfield")
        if kind == "volume":
            image = data[:, :, args.index]
        else:
            image = data[args.index]
    elif data.ndim == 2:
        image = data
    else:
        raise ValueError(f"cannot plot a spectrum of shape {data.shape}")
    spectrum_plot(image, args.out)
    ratio = band_energy_ratio(image)
    print(f"wrote {args.out}; high-band energy ratio {ratio:.4f}")
    return 0


def cmd_gradcheck(args) -> int:
    report = gradient_check(ReconConfig(), seed=args.seed)
    for line in report.lines():
        print(line)
    if not report.passed:
        print("gradient check FAILED", file=sys.stderr)
        return 1
    print("gradient check passed")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lfmrecon",
        description="Multi-view light-field reconstruction workbench",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="generate a synthetic test volume")
    p.add_argument("--kind", required=True,
                   choices=("beads", "bars", "filaments"))
    p.add_argument("--shape", required=True, help="X,Y,Z in voxels")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--radius", type=float, default=1.5)
    p.add_argument("--pitches", default="8,4,2")
    p.add_argument("--margin", type=int, default=8)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("psf", help="synthesize a PSF stack")
    p.add_argument("--grid", required=True,
                   help="nx,ny,pixel_size[,wavelength,na,index]")
    p.add_argument("--views", required=True, help="count[,sub_aperture_radius]")
    p.add_argument("--depths", required=True,
                   help="z1,z2,... or start:stop:count (micrometers)")
    p.add_argument("--zernike", default="",
                   help="aberration coefficients, e.g. 4=1.0,6=-0.2 (radians)")
    p.add_argument("--order", type=int, default=15,
                   help="minimum Zernike order count")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_psf)

    p = sub.add_parser("project", help="forward-project a volume")
    p.add_argument("--volume", required=True)
    p.add_argument("--psf", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("reconstruct", help="iterative reconstruction")
    p.add_argument("--lf", required=True)
    p.add_argument("--psf-config", required=True,
                   help="JSON describing grid, views, depths, zernike_count")
    p.add_argument("--config", help="JSON mirroring ReconConfig fields")
    p.add_argument("--dao", choices=("on", "off"))
    p.add_argument("--fft-variant", choices=("complex", "amplitude"))
    p.add_argument("--warmstart", help="checkpoint file to start from")
    p.add_argument("--out", required=True)
    p.add_argument("--trace-csv")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("rld", help="Richardson-Lucy baseline")
    p.add_argument("--lf", required=True)
    p.add_argument("--psf", required=True)
    p.add_argument("--iters", type=int, default=200)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rld)

    p = sub.add_parser("metrics", help="PSNR/SSIM against a reference")
    p.add_argument("--recon", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--report-csv")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("spectrum", help="log-magnitude spectrum PNG")
    p.add_argument("--image", required=True, help="raw image/volume file")
    p.add_argument("--index", type=int, default=0,
                   help="view (light field) or z-slice (volume) to plot")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("gradcheck", help="finite-difference gradient audit")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
