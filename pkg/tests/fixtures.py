"""Shared synthetic scenes and rig builders for the test suite."""

from __future__ import annotations

import numpy as np

import hdrfuse as hf

KODAK_GAIN = 0.27                      # DV/e
KODAK_BIAS_DV = 72 * 0.27              # readout mean 72 e
KODAK_READVAR_DV2 = (0.27 * 11.8) ** 2  # readout std 11.8 e
CANON_GAIN = 0.23
CANON_READVAR_DV2 = 6.5
CANON40D_GAIN = 1.24
CANON40D_READVAR_DV2 = 64.2


def identity_T() -> np.ndarray:
    return np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])


def translate_T(tx: float, ty: float) -> np.ndarray:
    return np.array([[1.0, 0.0, tx], [0.0, 1.0, ty]])


def rotate_T(degrees: float, cx: float, cy: float) -> np.ndarray:
    a = np.radians(degrees)
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, cx - c * cx + s * cy], [s, c, cy - s * cx - c * cy]])


def make_config(
    sensor_id: int,
    scaling: float,
    transform: np.ndarray | None = None,
    exposure_time: float = 0.1,
    gain: float = KODAK_GAIN,
    saturation_level: int = 4095,
    bit_depth: int = 12,
    pattern: hf.BayerPattern = hf.BayerPattern.RGGB,
    black_level: float = KODAK_BIAS_DV,
) -> hf.SensorConfig:
    return hf.SensorConfig(
        sensor_id=sensor_id,
        exposure_time=exposure_time,
        gain=gain,
        exposure_scaling=scaling,
        transform=identity_T() if transform is None else transform,
        saturation_level=saturation_level,
        bit_depth=bit_depth,
        pattern=pattern,
        black_level=black_level,
    )


def kodak_noise() -> hf.SensorNoiseTruth:
    return hf.SensorNoiseTruth(bias_dv=KODAK_BIAS_DV, readout_var_dv2=KODAK_READVAR_DV2)


def gauss_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    r = int(np.ceil(3 * sigma))
    xs = np.arange(-r, r + 1)
    k = np.exp(-(xs**2) / (2 * sigma**2))
    k /= k.sum()
    out = np.apply_along_axis(
        lambda m: np.convolve(np.pad(m, r, mode="edge"), k, "valid"), 0, img
    )
    return np.apply_along_axis(
        lambda m: np.convolve(np.pad(m, r, mode="edge"), k, "valid"), 1, out
    )


def ramp_scene(width: int, height: int, lo: float, hi: float) -> hf.HDRImage:
    """Radiance linear in x, constant in y, equal channels."""
    x = np.linspace(0.0, 1.0, width)[None, :].repeat(height, 0)
    lum = lo + (hi - lo) * x
    return hf.HDRImage(np.ascontiguousarray(np.stack([lum] * 3, -1), np.float32))


def constant_scene(width: int, height: int, value: float) -> hf.HDRImage:
    return hf.HDRImage(np.full((height, width, 3), value, np.float32))


def hdr_test_scene(width: int = 512, height: int = 341, top: float = 4.0e5) -> hf.HDRImage:
    """Band-limited HDR chart: ramp, colored bar target, checkerboard, highlight.

    The bar target straddles the most-exposed sensor's saturation radiance
    with opposing colors, the classic failure content for demosaic-first
    pipelines; a 0.8 px Gaussian keeps the chart representable on the grid.
    """
    x = np.linspace(0, 1, width)[None, :].repeat(height, 0)
    y = np.linspace(0, 1, height)[:, None].repeat(width, 1)
    xi = np.arange(width)[None, :].repeat(height, 0)
    yi = np.arange(height)[:, None].repeat(width, 1)
    lum = 2e3 + (top - 2e3) * x
    R, G, B = lum.copy(), 0.8 * lum, 1.15 * lum
    barzone = (y > 0.12) & (y < 0.48)
    barA = ((xi // 5) % 2 == 0) & barzone
    barB = ((xi // 5) % 2 == 1) & barzone
    R = np.where(barA, 2.5e5, R)
    G = np.where(barA, 6e4, G)
    B = np.where(barA, 4e4, B)
    R = np.where(barB, 4e4, R)
    G = np.where(barB, 1.1e5, G)
    B = np.where(barB, 2.8e5, B)
    check = ((((xi // 4) + (yi // 4)) % 2) == 0) & (y > 0.55) & (y < 0.78) & (x > 0.08) & (x < 0.6)
    R = np.where(check, 1.8e5, R)
    G = np.where(check, 3e4, G)
    B = np.where(check, 1.6e5, B)
    r2 = (x - 0.80) ** 2 + (y - 0.86) ** 2
    disk = r2 < 0.01
    R = np.where(disk, 8e5, R)
    G = np.where(disk, 7e5, G)
    B = np.where(disk, 9e5, B)
    rgb = np.stack([gauss_blur(R, 0.8), gauss_blur(G, 0.8), gauss_blur(B, 0.8)], -1)
    return hf.HDRImage(np.ascontiguousarray(rgb, np.float32))


def fig6_rig(width: int, height: int, seed: int = 11):
    """3 Kodak-profile sensors 5 f-stops apart, middle sensor offset (0.4, 0.45)."""
    cfgs = [
        make_config(0, 1.0),
        make_config(1, 2**-5, translate_T(0.4, 0.45)),
        make_config(2, 2**-10),
    ]
    noises = [kodak_noise() for _ in cfgs]
    return hf.RigSpec(
        sensors=cfgs, noise=noises, sensor_sizes=[(width, height)] * 3, seed=seed
    )


def rotation_rig(width: int, height: int, seed: int = 4):
    """3 Kodak-profile sensors 4 f-stops apart with 6 degree rotations between them."""
    cfgs = [
        make_config(0, 1.0, rotate_T(-6.0, width / 2, height / 2)),
        make_config(1, 2**-4),
        make_config(2, 2**-8, rotate_T(6.0, width / 2, height / 2)),
    ]
    noises = [kodak_noise() for _ in cfgs]
    return hf.RigSpec(
        sensors=cfgs, noise=noises, sensor_sizes=[(width, height)] * 3, seed=seed
    )


def simulate_and_sample(gt: hf.HDRImage, rig: hf.RigSpec):
    """Simulate the rig and convert frames with the exact noise truth."""
    frames, configs = hf.simulate_rig(gt, rig)
    cals = [
        noise.as_calibration(size[0], size[1], cfg.gain)
        for noise, cfg, size in zip(rig.noise, configs, rig.sensor_sizes)
    ]
    samples = hf.frames_to_samples(frames, configs, cals)
    return frames, cals, samples
