"""Command-line pipeline: calibrate, simulate, reconstruct, metrics.

Exit codes: 0 success, 2 usage/input error, 3 data-shape error, 4 numeric
failure. Every command is deterministic given its flags (and seed); the run
manifest written next to a reconstruction output records everything needed
to reproduce it bit-identically.
"""

from __future__ import annotations

import dataclasses
import functools
import hashlib
import json
import math
import os
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import __version__
from .calibration import (
    FrameStack,
    compute_bias_frame,
    compute_readout_variance,
    estimate_exposure_scaling,
    estimate_gain,
    estimate_nonuniformity,
)
from .images import FloatFrame, HDRImage
from .lpa import ReconstructionParams, reconstruct_frame
from .metrics import compute_report, psnr, rmse_log
from .pnm import PnmParseError, read_pfm, read_pgm16, write_pfm, write_pgm16
from .radiometry import ConfigurationError, NoiseCalibration, frames_to_samples
from .rig import ConfigError, RigDefinition, load_rig, save_rig, sensor_to_block
from .simulate import RigSpec, simulate_rig
from .steering import AdaptiveParams, calpa_reconstruct
from .validation import ShapeMismatchError

EXIT_USAGE = 2
EXIT_SHAPE = 3
EXIT_NUMERIC = 4


def _exit_codes(f):
    """Map library exceptions onto the documented exit codes."""

    @functools.wraps(f)
    def wrapper(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except (ConfigError, ConfigurationError, PnmParseError, FileNotFoundError) as e:
            click.echo(f"error: {e}", err=True)
            sys.exit(EXIT_USAGE)
        except ShapeMismatchError as e:
            click.echo(f"error: {e}", err=True)
            sys.exit(EXIT_SHAPE)
        except (np.linalg.LinAlgError, FloatingPointError, ZeroDivisionError) as e:
            click.echo(f"numeric failure: {e}", err=True)
            sys.exit(EXIT_NUMERIC)
        except ValueError as e:
            click.echo(f"error: {e}", err=True)
            sys.exit(EXIT_USAGE)

    return wrapper


def _set_threads(threads: int | None) -> int:
    import numba

    if threads is None:
        env = os.environ.get("HDRFUSE_THREADS")
        threads = int(env) if env else numba.config.NUMBA_NUM_THREADS
    threads = max(1, min(int(threads), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(threads)
    return threads


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    h.update(Path(path).read_bytes())
    return h.hexdigest()


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, float) and math.isinf(obj):
        return None
    return obj


@click.group()
@click.version_option(__version__)
def main():
    """HDR reconstruction from multi-sensor raw Bayer captures."""


@main.command("simulate")
@click.argument("ground_truth", type=click.Path(path_type=Path))
@click.argument("rig_config", type=click.Path(path_type=Path))
@click.argument("out_dir", type=click.Path(path_type=Path))
@click.option("--seed", type=int, default=0, show_default=True, help="RNG seed.")
@click.option("--noise-free", is_flag=True, help="Replace noise draws by their means.")
@_exit_codes
def cmd_simulate(ground_truth, rig_config, out_dir, seed, noise_free):
    """Render per-sensor raw PGM frames from a ground-truth PFM."""
    gt = read_pfm(ground_truth)
    if not isinstance(gt, HDRImage):
        raise ConfigError(f"ground truth must be a 3-channel (PF) PFM: {ground_truth}")
    rig = load_rig(rig_config)
    sizes = [s.size or (gt.width, gt.height) for s in rig.sensors]
    spec = RigSpec(
        sensors=rig.configs,
        noise=[s.noise_truth() for s in rig.sensors],
        sensor_sizes=sizes,
        seed=seed,
        noise_free=noise_free,
        reference_size=sizes[0],
    )
    frames, configs = simulate_rig(gt, spec)
    out_dir.mkdir(parents=True, exist_ok=True)
    blocks = []
    for frame, cfg, sensor, size in zip(frames, configs, rig.sensors, sizes):
        name = f"s{cfg.sensor_id}.pgm"
        write_pgm16(frame, out_dir / name)
        w, h = size
        overrides = {"width": w, "height": h}
        # emit the exact noise fields used, for calibration experiments
        for key, arr in (
            ("bias", sensor.bias.frame(w, h, "bias")),
            ("readout_variance", sensor.readout_variance.frame(w, h, "readout_variance")),
            ("nonuniformity", sensor.nonuniformity.frame(w, h, "nonuniformity")),
        ):
            fname = f"s{cfg.sensor_id}_{key}.pfm"
            write_pfm(FloatFrame(np.array(arr)), out_dir / fname)
            overrides[key] = fname
        blocks.append(sensor_to_block(sensor, overrides))
        click.echo(f"wrote {out_dir / name}")
    resolved = {
        "schema_version": 1,
        "sensors": blocks,
        "reconstruction": rig.reconstruction,
    }
    save_rig(resolved, out_dir / "rig_resolved.json")
    click.echo(f"wrote {out_dir / 'rig_resolved.json'}")


def _recon_defaults(rig: RigDefinition) -> dict:
    return dict(rig.reconstruction)


@main.command("reconstruct")
@click.argument("rig_config", type=click.Path(path_type=Path))
@click.argument("frames", nargs=-1, required=True, type=click.Path(path_type=Path))
@click.option("--out", "-o", required=True, type=click.Path(path_type=Path), help="Output PFM.")
@click.option("-M", "--order", type=int, default=None, help="Polynomial order (0, 1 or 2).")
@click.option("-h", "--scale", type=float, default=None, help="Window scale h in px^2.")
@click.option("--max-radius", type=float, default=None, help="Support radius cap in px.")
@click.option("--cond-threshold", type=float, default=1e8, show_default=True)
@click.option("--calpa", is_flag=True, help="Structure-adaptive second pass.")
@click.option("--alpha", type=float, default=None, help="Structure sensitivity (CALPA).")
@click.option("--grad-window", type=int, default=None, help="Gradient analysis window (odd).")
@click.option("--width", type=int, default=None, help="Output width (default: first frame's).")
@click.option("--height", type=int, default=None, help="Output height.")
@click.option("--threads", type=int, default=None, help="Worker threads (env HDRFUSE_THREADS).")
@click.option("--preview", type=click.Path(path_type=Path), default=None,
              help="Also write an 8-bit gamma preview PNG.")
@_exit_codes
def cmd_reconstruct(rig_config, frames, out, order, scale, max_radius, cond_threshold,
                    calpa, alpha, grad_window, width, height, threads, preview):
    """Reconstruct an HDR PFM from per-sensor raw PGM frames."""
    rig = load_rig(rig_config)
    if len(frames) != len(rig.sensors):
        raise ShapeMismatchError(
            f"frame count mismatch: {len(frames)} frames for {len(rig.sensors)} sensors"
        )
    threads_used = _set_threads(threads)
    defaults = _recon_defaults(rig)
    order = order if order is not None else int(defaults.get("order", 1))
    scale = scale if scale is not None else float(defaults.get("scale", 0.7))
    if max_radius is None and defaults.get("max_radius") is not None:
        max_radius = float(defaults["max_radius"])
    alpha = alpha if alpha is not None else float(defaults.get("alpha", 0.005))
    grad_window = grad_window if grad_window is not None else int(defaults.get("grad_window", 9))

    raws = []
    for path, sensor in zip(frames, rig.sensors):
        if not Path(path).exists():
            raise ConfigError(f"frame does not exist: {path}")
        raws.append(read_pgm16(path, pattern=sensor.config.pattern))
    cals = [
        sensor.calibration(raw.width, raw.height)
        for sensor, raw in zip(rig.sensors, raws)
    ]
    ref_size = (raws[0].width, raws[0].height)
    out_size = (width or ref_size[0], height or ref_size[1])

    params = ReconstructionParams(
        order=order, scale=scale, max_support_radius=max_radius, cond_threshold=cond_threshold
    )
    t0 = time.perf_counter()
    samples = frames_to_samples(raws, [s.config for s in rig.sensors], cals)
    if calpa:
        adaptive = AdaptiveParams(alpha=alpha, gradient_window=grad_window, base=params)
        hdr = calpa_reconstruct(samples, out_size, adaptive, ref_size=ref_size)
    else:
        hdr = reconstruct_frame(samples, out_size, params, ref_size=ref_size)
    elapsed = time.perf_counter() - t0
    out.parent.mkdir(parents=True, exist_ok=True)
    write_pfm(hdr, out)
    manifest = {
        "command": "reconstruct",
        "version": __version__,
        "rig_config": str(rig_config),
        "frames": [{"path": str(p), "sha256": _sha256(p)} for p in frames],
        "parameters": {
            "order": order,
            "scale": scale,
            "max_radius": max_radius,
            "cond_threshold": cond_threshold,
            "calpa": bool(calpa),
            "alpha": alpha,
            "grad_window": grad_window,
            "width": out_size[0],
            "height": out_size[1],
        },
        "threads": threads_used,
        "seconds": elapsed,
    }
    Path(str(out) + ".manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    click.echo(f"wrote {out} ({elapsed:.2f} s)")
    if preview is not None:
        _write_preview(hdr, rig, preview)
        click.echo(f"wrote {preview}")


def _write_preview(hdr: HDRImage, rig: RigDefinition, path: Path) -> None:
    """Gamma-2.2 8-bit preview; NaNs filled with the least-sensitive sensor's
    saturation radiance (the brightest radiance any sensor can represent)."""
    from PIL import Image

    data = hdr.data.astype(np.float64).copy()
    sat_radiances = [
        (c.saturation_level - c.black_level) / (c.gain * c.exposure_time * c.exposure_scaling)
        for c in rig.configs
    ]
    data[~np.isfinite(data)] = max(sat_radiances)
    finite = data[np.isfinite(data)]
    top = np.percentile(finite, 99.0) if finite.size else 1.0
    norm = np.clip(data / max(top, 1e-30), 0.0, 1.0) ** (1.0 / 2.2)
    Image.fromarray((norm * 255.0 + 0.5).astype(np.uint8)).save(path)


@main.command("calibrate")
@click.argument("rig_config", type=click.Path(path_type=Path))
@click.option("--black-root", required=True, type=click.Path(path_type=Path),
              help="Directory with per-sensor black stacks in s<ID>/ subdirectories.")
@click.option("--flat-root", required=True, type=click.Path(path_type=Path),
              help="Directory with per-sensor flat-field stacks in s<ID>/ subdirectories.")
@click.option("--out", required=True, type=click.Path(path_type=Path), help="Output directory.")
@click.option("--flat-exposures", default=None,
              help="Comma-separated per-sensor flat exposure times (defaults to config values).")
@_exit_codes
def cmd_calibrate(rig_config, black_root, flat_root, out, flat_exposures):
    """Estimate bias, readout variance, gain, scalings and non-uniformity."""
    rig = load_rig(rig_config)
    for root in (black_root, flat_root):
        if not root.is_dir():
            raise ConfigError(f"stack directory does not exist: {root}")
    flat_times = None
    if flat_exposures:
        flat_times = [float(v) for v in flat_exposures.split(",")]
        if len(flat_times) != len(rig.sensors):
            raise ConfigError(
                f"--flat-exposures needs {len(rig.sensors)} values, got {len(flat_times)}"
            )

    def read_stack(root: Path, sensor_id: int, kind: str, pattern) -> FrameStack:
        d = root / f"s{sensor_id}"
        if not d.is_dir():
            raise ConfigError(f"stack directory does not exist: {d}")
        paths = sorted(d.glob("*.pgm"))
        if len(paths) < 2:
            raise ConfigError(f"need at least 2 frames in {d}, found {len(paths)}")
        return FrameStack([read_pgm16(p, pattern=pattern) for p in paths], kind=kind)

    out.mkdir(parents=True, exist_ok=True)
    results = []
    flat_configs = []
    flats = []
    partial_cals = []
    for k, sensor in enumerate(rig.sensors):
        cfg = sensor.config
        black = read_stack(black_root, cfg.sensor_id, "black", cfg.pattern)
        flat = read_stack(flat_root, cfg.sensor_id, "flatfield", cfg.pattern)
        bias = compute_bias_frame(black)
        read_var = compute_readout_variance(black)
        gain = estimate_gain(flat, black, cfg)
        sdir = out / f"s{cfg.sensor_id}"
        sdir.mkdir(exist_ok=True)
        write_pfm(bias, sdir / "bias.pfm")
        write_pfm(read_var, sdir / "readvar.pfm")
        if flat_times is not None:
            fcfg = dataclasses.replace(cfg, exposure_time=flat_times[k], gain=gain.gain)
        else:
            fcfg = dataclasses.replace(cfg, gain=gain.gain)
        flat_configs.append(fcfg)
        flats.append(flat)
        partial_cals.append(
            NoiseCalibration(
                bias=bias,
                readout_variance=read_var,
                nonuniformity=FloatFrame(np.ones(black.shape)),
                gain_estimate=gain.gain,
            )
        )
        results.append({"sensor": cfg.sensor_id, "gain": gain.gain,
                        "gain_spatial_std": gain.spatial_std, "stack": sdir})

    scalings = estimate_exposure_scaling(flats, flat_configs, partial_cals)
    if np.any(scalings > 1.05):
        click.echo(
            "warning: an exposure scaling estimate exceeds 1; the reference sensor "
            "may not be the most sensitive one",
            err=True,
        )
    # a noisy estimate for a near-unity sensor may land just above 1; clamp into
    # the valid domain for the written config (raw values go to calibration.txt)
    clamped = np.minimum(scalings, 1.0)
    blocks = []
    lines = []
    for k, (sensor, res) in enumerate(zip(rig.sensors, results)):
        cfg = sensor.config
        nonuni = estimate_nonuniformity(flats[k], scalings[k], flat_configs[k], partial_cals[k])
        sdir = res["stack"]
        write_pfm(nonuni, sdir / "nonuniformity.pfm")
        rel = sdir.name
        blocks.append(sensor_to_block(sensor, {
            "gain_dv_per_e": res["gain"],
            "exposure_scaling": float(clamped[k]),
            "bias": f"{rel}/bias.pfm",
            "readout_variance": f"{rel}/readvar.pfm",
            "nonuniformity": f"{rel}/nonuniformity.pfm",
        }))
        lines.append(
            f"sensor {cfg.sensor_id}: gain = {res['gain']:.6g} +- {res['gain_spatial_std']:.3g} DV/e, "
            f"exposure_scaling = {scalings[k]:.6g}"
        )
    (out / "calibration.txt").write_text("\n".join(lines) + "\n")
    save_rig({"schema_version": 1, "sensors": blocks, "reconstruction": rig.reconstruction},
             out / "rig_calibrated.json")
    for line in lines:
        click.echo(line)
    click.echo(f"wrote {out / 'rig_calibrated.json'}")


@main.command("metrics")
@click.argument("image_a", type=click.Path(path_type=Path))
@click.argument("image_b", type=click.Path(path_type=Path))
@click.option("--mask", type=click.Path(path_type=Path), default=None,
              help="Single-channel PFM; nonzero pixels are compared.")
@click.option("--json", "as_json", is_flag=True, help="Emit a JSON report.")
@_exit_codes
def cmd_metrics(image_a, image_b, mask, as_json):
    """Compare two HDR PFMs (second argument is the reference)."""
    for p in (image_a, image_b):
        if not Path(p).exists():
            raise ConfigError(f"input does not exist: {p}")
    a = read_pfm(image_a)
    b = read_pfm(image_b)
    if not isinstance(a, HDRImage) or not isinstance(b, HDRImage):
        raise ConfigError("metrics expects 3-channel (PF) PFM inputs")
    if mask is not None:
        m = read_pfm(mask)
        if not isinstance(m, FloatFrame):
            raise ConfigError("mask must be a single-channel (Pf) PFM")
        mask_arr = m.data != 0
        report = {
            "psnr_db": psnr(a, b, mask_arr),
            "rmse_log2": rmse_log(a, b, mask_arr),
            "regions": {},
        }
    else:
        report = compute_report(a, b).to_dict()
    if as_json:
        # infinite PSNR (identical content) is encoded as null in JSON mode
        click.echo(json.dumps(_json_safe(report), indent=2))
    else:
        click.echo(f"psnr: {report['psnr_db']:.4f} dB")
        click.echo(f"rmse_log2: {report['rmse_log2']:.6g}")
        for name, vals in report["regions"].items():
            click.echo(
                f"  {name}: psnr {vals['psnr_db']:.4f} dB, rmse_log2 {vals['rmse_log2']:.6g}"
                f" ({vals['pixels']} px)"
            )


if __name__ == "__main__":
    main()
