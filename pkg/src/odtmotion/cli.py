"""Command-line pipeline: phantom generation, simulation, noise,
preprocessing, motion estimation, reconstruction, and evaluation.

Every stage reads and writes the formats of :mod:`odtmotion.io`; the
``pipeline`` command chains all stages in one run directory and emits a
manifest (resolved config, input hashes, package version) that fully
determines the outputs.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, direct, energy, infinitesimal, io, preprocess, recon, simulate, so3
from .config import PipelineConfig, config_to_dict, load_config
from .grids import FieldStack, VolumeGrid
from .simulate import MeasurementGeometry

__all__ = ["main"]


def _fail(message: str, detail: str = "") -> int:
    record = {"error": message}
    if detail:
        record["detail"] = detail
    print(json.dumps(record), file=sys.stderr)
    return 2


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


def _geometry(cfg: PipelineConfig) -> MeasurementGeometry:
    return MeasurementGeometry(cfg.n_pixels, cfg.pitch, cfg.wavelength,
                               cfg.n0, cfg.plane_offset, cfg.band_fraction)


def _phantom(cfg: PipelineConfig) -> simulate.Phantom:
    spec = simulate.PhantomSpec(
        grid_n=cfg.recon_grid_n or cfg.n_pixels, pitch=cfg.pitch,
        n0=cfg.n0, wavelength=cfg.wavelength,
        semi_axes=tuple(cfg.semi_axes), n_ellipsoid=cfg.n_ellipsoid,
        bead_count=cfg.bead_count, bead_radius=cfg.bead_radius,
        n_bead=cfg.n_bead, seed=cfg.phantom_seed)
    return simulate.make_phantom(spec)


def _truth_trajectory(cfg: PipelineConfig) -> so3.RotationTrajectory:
    T = cfg.n_frames
    drift = np.asarray(cfg.translation_drift, dtype=float)
    translations = None
    if np.any(drift != 0.0):
        translations = np.arange(T)[:, None] * drift[None, :]
    base = simulate.constant_rotation_trajectory(
        T, axis=cfg.rotation_axis, rate=cfg.rotation_rate)
    return so3.RotationTrajectory(base.rotations, translations)


def _simulate_stack(cfg: PipelineConfig, phantom: simulate.Phantom,
                    traj: so3.RotationTrajectory) -> FieldStack:
    geom = _geometry(cfg)
    if cfg.forward_model == "born":
        f = simulate.n_to_f(phantom)
        return simulate.born_stack(f, geom, traj, total_field=True)
    if cfg.forward_model == "bpm":
        return simulate.bpm_stack(phantom, geom, traj)
    raise ValueError(f"unknown forward model {cfg.forward_model!r}")


def _add_noise(cfg: PipelineConfig, stack: FieldStack) -> FieldStack:
    sigma = cfg.noise_sigma
    if cfg.noise_snr_db is not None:
        inc = preprocess.estimate_incident(stack)
        scattered = preprocess.born_subtract(stack, inc)
        sigma = simulate.sigma_for_snr(scattered, cfg.noise_snr_db)
    if sigma <= 0.0 and cfg.phase_drift <= 0.0:
        return stack
    return simulate.add_noise(stack, sigma, cfg.noise_seed, cfg.phase_drift)


def _preprocess(cfg: PipelineConfig, stack: FieldStack) -> FieldStack:
    inc = preprocess.estimate_incident(stack, cfg.incident_smooth_window)
    transform = cfg.transform
    if transform == "auto":
        transform = "rytov" if cfg.forward_model == "bpm" else "born"
    if transform == "rytov":
        out = preprocess.rytov_transform(stack, inc)
    elif transform == "born":
        out = preprocess.born_subtract(stack, inc)
    elif transform == "none":
        out = stack
    else:
        raise ValueError(f"unknown transform {cfg.transform!r}")
    if cfg.apply_cutoff:
        r1, r2 = cfg.cutoff_r1, cfg.cutoff_r2
        if r2 is None:
            r1_def, r2 = preprocess.default_cutoff_radii(out)
            r1 = r1 if r1 is not None else r1_def
        elif r1 is None:
            r1 = 0.7 * r2
        out = preprocess.soft_cutoff(out, r1, r2)
    if cfg.smoothing_sigma > 0.0:
        out = preprocess.gaussian_smooth_3d(out, cfg.smoothing_sigma)
    if cfg.compensate_shifts:
        shifts = preprocess.estimate_shifts(out)
        out = preprocess.recenter(out, shifts.shifts)
    return out


def _estimate(cfg: PipelineConfig, stack: FieldStack) -> so3.RotationTrajectory:
    traj = infinitesimal.infinitesimal_pipeline(
        stack, n_radii=cfg.n_radii, n_angles=cfg.n_angles,
        lam=cfg.reg_lambda, alpha=cfg.reg_alpha,
        iterations=cfg.reg_iterations, band_fraction=cfg.band_fraction,
        derivative_method=cfg.derivative_method,
        inner_exclusion_cells=cfg.inner_exclusion_cells)
    if cfg.method == "infinitesimal":
        return traj
    if cfg.method not in ("direct", "both"):
        raise ValueError(f"unknown estimation method {cfg.method!r}")
    period = cfg.period
    if period is None:
        try:
            period = direct.estimate_period(stack)
        except ValueError:
            period = float(stack.n_frames)
    schedule = direct.build_schedule(stack.n_frames, period,
                                     passes=cfg.passes, stride=cfg.stride,
                                     offset_step=cfg.offset_step)
    r_min = cfg.inner_exclusion_cells * 2.0 * np.pi / (stack.n * stack.pitch)
    grids = [energy.nu_cartesian(stack.frame(t), stack.k0,
                                 cfg.band_fraction, cfg.nu_oversample,
                                 inner_exclusion=r_min)
             for t in range(stack.n_frames)]
    scan = np.linspace(0.5, 3.0, 11) if cfg.axis_scan else None
    return direct.direct_pipeline(grids, traj, schedule,
                                  lam=cfg.direct_lambda,
                                  quad_points=cfg.quad_points,
                                  energy_scale=cfg.energy_scale,
                                  axis_scan=scan)


def _reconstruct(cfg: PipelineConfig, stack: FieldStack,
                 traj: so3.RotationTrajectory) -> VolumeGrid:
    geom = _geometry(cfg)
    samples = recon.assemble_samples(stack, traj, geom, cfg.band_fraction)
    grid_n = cfg.recon_grid_n or cfg.n_pixels
    return recon.cg_inverse_ndft(samples, grid_n, cfg.cg_iterations)


def cmd_phantom(args) -> int:
    cfg = load_config(args.config)
    phantom = _phantom(cfg)
    io.write_volume(args.output, phantom.index, cfg.wavelength, cfg.n0)
    return 0


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    if args.phantom:
        vol, wavelength, n0 = io.read_volume(args.phantom)
        vol = VolumeGrid(np.asarray(vol.values).real, vol.pitch)
        phantom = simulate.Phantom(vol, n0 or cfg.n0,
                                   wavelength or cfg.wavelength)
    else:
        phantom = _phantom(cfg)
    traj = _truth_trajectory(cfg)
    stack = _simulate_stack(cfg, phantom, traj)
    io.write_stack(args.output, stack)
    if args.truth:
        io.write_trajectory_csv(args.truth, traj)
    return 0


def cmd_noise(args) -> int:
    cfg = load_config(args.config, {"noise_sigma": args.sigma,
                                    "noise_snr_db": args.snr_db,
                                    "noise_seed": args.seed})
    stack = io.read_stack(args.input)
    io.write_stack(args.output, _add_noise(cfg, stack))
    return 0


def cmd_preprocess(args) -> int:
    cfg = load_config(args.config, {"transform": args.transform})
    stack = io.read_stack(args.input)
    io.write_stack(args.output, _preprocess(cfg, stack))
    return 0


def cmd_estimate(args) -> int:
    cfg = load_config(args.config, {"method": args.method})
    stack = io.read_stack(args.input)
    traj = _estimate(cfg, stack)
    io.write_trajectory_csv(args.output, traj)
    if args.json:
        io.write_trajectory_json(args.json, traj)
    return 0


def cmd_reconstruct(args) -> int:
    cfg = load_config(args.config)
    stack = io.read_stack(args.input)
    traj = io.read_trajectory_csv(args.trajectory)
    f_vol = _reconstruct(cfg, stack, traj)
    io.write_volume(args.output, f_vol, cfg.wavelength, cfg.n0)
    if args.index:
        k0 = 2.0 * np.pi * cfg.n0 / cfg.wavelength
        n_vol, clamped = recon.potential_to_index(f_vol, cfg.n0, k0)
        io.write_volume(args.index, n_vol, cfg.wavelength, cfg.n0)
        if clamped:
            print(f"clamped {clamped} nonphysical voxels", file=sys.stderr)
    return 0


def cmd_evaluate(args) -> int:
    est = io.read_trajectory_csv(args.estimate)
    truth = io.read_trajectory_csv(args.truth)
    report = recon.rotation_error_series(est, truth, align=args.align)
    metrics = {
        "rotation_error_deg": {
            "mean": report.mean_deg,
            "per_frame": [float(v) for v in report.per_frame_deg],
        },
    }
    if args.est_volume and args.ref_volume:
        vol_e, _, _ = io.read_volume(args.est_volume)
        vol_r, _, _ = io.read_volume(args.ref_volume)
        metrics["psnr_db"] = recon.psnr(vol_r, vol_e)
        metrics["ssim"] = recon.ssim3d(vol_r, vol_e)
    io.write_metrics(args.output, metrics)
    return 0


def cmd_pipeline(args) -> int:
    cfg = load_config(args.config)
    outdir = Path(args.output)
    outdir.mkdir(parents=True, exist_ok=True)

    phantom = _phantom(cfg)
    io.write_volume(outdir / "phantom_n.odtv", phantom.index,
                    cfg.wavelength, cfg.n0)
    truth = _truth_trajectory(cfg)
    io.write_trajectory_csv(outdir / "truth.csv", truth)

    raw = _simulate_stack(cfg, phantom, truth)
    io.write_stack(outdir / "raw.odts", raw)
    noisy = _add_noise(cfg, raw)
    prep = _preprocess(cfg, noisy)
    io.write_stack(outdir / "preprocessed.odts", prep)

    est = _estimate(cfg, prep)
    io.write_trajectory_csv(outdir / "trajectory.csv", est)
    io.write_trajectory_json(outdir / "trajectory.json", est)

    f_vol = _reconstruct(cfg, prep, est)
    io.write_volume(outdir / "recon_f.odtv", f_vol, cfg.wavelength, cfg.n0)
    k0 = 2.0 * np.pi * cfg.n0 / cfg.wavelength
    n_vol, clamped = recon.potential_to_index(f_vol, cfg.n0, k0)
    io.write_volume(outdir / "recon_n.odtv", n_vol, cfg.wavelength, cfg.n0)

    report = recon.rotation_error_series(est, truth)
    f_true = simulate.n_to_f(phantom)
    metrics = {
        "rotation_error_deg": {
            "mean": report.mean_deg,
            "per_frame": [float(v) for v in report.per_frame_deg],
        },
        "psnr_db": recon.psnr(VolumeGrid(f_true.values, f_true.pitch),
                              VolumeGrid(f_vol.values.real, f_vol.pitch)),
        "ssim": recon.ssim3d(VolumeGrid(f_true.values, f_true.pitch),
                             VolumeGrid(f_vol.values.real, f_vol.pitch)),
        "clamped_voxels": clamped,
    }
    io.write_metrics(outdir / "metrics.json", metrics)

    manifest = {
        "version": __version__,
        "config": config_to_dict(cfg),
        "inputs": {},
    }
    if args.config:
        manifest["inputs"][str(args.config)] = _sha256(Path(args.config))
    (outdir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="odtmotion",
        description="Common-circle motion estimation and refractive-index "
                    "reconstruction for optical diffraction tomography.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="generate the synthetic phantom")
    p.add_argument("--config", default=None)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("simulate", help="forward-simulate a measurement stack")
    p.add_argument("--config", default=None)
    p.add_argument("--phantom", default=None, help="phantom volume file")
    p.add_argument("--truth", default=None, help="write the true trajectory")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("noise", help="inject synthetic noise into a stack")
    p.add_argument("--config", default=None)
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--snr-db", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("-i", "--input", required=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_noise)

    p = sub.add_parser("preprocess", help="total field -> transformed data")
    p.add_argument("--config", default=None)
    p.add_argument("--transform", choices=("rytov", "born", "none"),
                   default=None)
    p.add_argument("-i", "--input", required=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("estimate", help="estimate the rotation trajectory")
    p.add_argument("--config", default=None)
    p.add_argument("--method", choices=("infinitesimal", "direct", "both"),
                   default=None)
    p.add_argument("--json", default=None, help="also write JSON trajectory")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("reconstruct", help="invert the measurements")
    p.add_argument("--config", default=None)
    p.add_argument("--trajectory", required=True)
    p.add_argument("--index", default=None,
                   help="also write the refractive-index volume")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("evaluate", help="compare trajectories and volumes")
    p.add_argument("--estimate", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--align", action="store_true",
                   help="remove the global gauge rotation first")
    p.add_argument("--est-volume", default=None)
    p.add_argument("--ref-volume", default=None)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("pipeline", help="run all stages into a directory")
    p.add_argument("--config", default=None)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        return _fail("missing input file", str(exc))
    except (ValueError, RuntimeError) as exc:
        return _fail("invalid input", str(exc))


if __name__ == "__main__":
    sys.exit(main())
