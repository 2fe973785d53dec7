"""Forward camera model for generating synthetic raw multi-sensor captures.

Photon arrival is Poisson: the electron count at a pixel has expectation
t * a * n * f for radiance f (electrons/second). The digital value adds
gain and Gaussian readout noise in DV,

    y = round(g * e + r),   r ~ Normal(bias_dv, readout_var_dv2),

rounded half-up and clipped to [0, saturation_level]. Random streams are
counter-based (Philox) keyed by (seed, sensor id), so frames are
bit-reproducible across runs and platforms regardless of scheduling.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .bayer import ColorChannel, channel_map
from .images import CFAImage, FloatFrame, HDRImage
from .radiometry import NoiseCalibration, SensorConfig

# Poisson sampling switches to a moment-matched normal above this mean;
# below it the generator's exact algorithms are used.
_POISSON_NORMAL_CROSSOVER = 1000.0

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class SensorNoiseTruth:
    """Ground-truth noise parameters of one simulated sensor.

    Scalars broadcast over the frame; arrays give per-pixel fields (e.g. a
    PRNU map for the non-uniformity).
    """

    bias_dv: ArrayLike = 0.0
    readout_var_dv2: ArrayLike = 0.0
    nonuniformity: ArrayLike = 1.0

    def bias_frame(self, width: int, height: int) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.bias_dv, dtype=np.float64), (height, width))

    def readout_var_frame(self, width: int, height: int) -> np.ndarray:
        return np.broadcast_to(
            np.asarray(self.readout_var_dv2, dtype=np.float64), (height, width)
        )

    def nonuniformity_frame(self, width: int, height: int) -> np.ndarray:
        return np.broadcast_to(
            np.asarray(self.nonuniformity, dtype=np.float64), (height, width)
        )

    def as_calibration(self, width: int, height: int, gain: float = 0.0) -> NoiseCalibration:
        """Exact calibration corresponding to this truth (for oracle pipelines)."""
        return NoiseCalibration(
            bias=FloatFrame(self.bias_frame(width, height).copy()),
            readout_variance=FloatFrame(self.readout_var_frame(width, height).copy()),
            nonuniformity=FloatFrame(self.nonuniformity_frame(width, height).copy()),
            gain_estimate=gain,
        )


@dataclass(frozen=True)
class RigSpec:
    """A full simulated rig: sensor configs, their noise truths, and the RNG seed."""

    sensors: Sequence[SensorConfig]
    noise: Sequence[SensorNoiseTruth]
    sensor_sizes: Sequence[tuple[int, int]]  # (width, height) per sensor
    seed: int = 0
    noise_free: bool = False
    reference_size: Optional[tuple[int, int]] = None

    def __post_init__(self):
        if not len(self.sensors):
            raise ValueError("rig needs at least one sensor")
        if not (len(self.sensors) == len(self.noise) == len(self.sensor_sizes)):
            raise ValueError("sensors, noise and sensor_sizes must align")


def sensor_rng(seed: int, sensor_id: int) -> np.random.Generator:
    """Independent counter-based stream for one sensor of one run."""
    key = np.array([np.uint64(seed), np.uint64(sensor_id)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def sample_scene(gt: HDRImage, transform: np.ndarray, x, y, channel: ColorChannel) -> np.ndarray:
    """Bilinear lookup of the ground-truth channel plane at transformed positions.

    ``transform`` is the sensor's 2x3 matrix into ground-truth coordinates;
    positions outside the image are edge-clamped.
    """
    T = np.asarray(transform, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    u = T[0, 0] * x + T[0, 1] * y + T[0, 2]
    v = T[1, 0] * x + T[1, 1] * y + T[1, 2]
    plane = gt.plane(channel).astype(np.float64, copy=False)
    h, w = plane.shape
    u = np.clip(u, 0.0, w - 1.0)
    v = np.clip(v, 0.0, h - 1.0)
    u0 = np.floor(u).astype(np.int64)
    v0 = np.floor(v).astype(np.int64)
    u1 = np.minimum(u0 + 1, w - 1)
    v1 = np.minimum(v0 + 1, h - 1)
    fu = u - u0
    fv = v - v0
    top = plane[v0, u0] * (1 - fu) + plane[v0, u1] * fu
    bot = plane[v1, u0] * (1 - fu) + plane[v1, u1] * fu
    return top * (1 - fv) + bot * fv


def _sample_poisson(rng: np.random.Generator, lam: np.ndarray) -> np.ndarray:
    lam = np.asarray(lam, dtype=np.float64)
    out = np.empty_like(lam)
    small = lam <= _POISSON_NORMAL_CROSSOVER
    if np.any(small):
        out[small] = rng.poisson(lam[small])
    if np.any(~small):
        big = lam[~small]
        draws = rng.normal(big, np.sqrt(big))
        out[~small] = np.maximum(np.round(draws), 0.0)
    return out


def expose(
    f: ArrayLike,
    cfg: SensorConfig,
    noise: SensorNoiseTruth,
    rng: Optional[np.random.Generator],
    noise_free: bool = False,
) -> np.ndarray:
    """Digital values for incident radiance ``f`` (electrons/second, >= 0).

    ``noise_free`` replaces the Poisson draw by its mean and the readout draw
    by the bias; quantization and clipping still apply.
    """
    f = np.asarray(f, dtype=np.float64)
    if f.ndim == 0:
        f = f[None]
    shape = f.shape
    a = np.broadcast_to(np.asarray(noise.nonuniformity, dtype=np.float64), shape)
    bias = np.broadcast_to(np.asarray(noise.bias_dv, dtype=np.float64), shape)
    var_r = np.broadcast_to(np.asarray(noise.readout_var_dv2, dtype=np.float64), shape)
    lam = cfg.exposure_time * a * cfg.exposure_scaling * np.maximum(f, 0.0)
    if noise_free:
        electrons = lam
        readout = bias
    else:
        if rng is None:
            raise ValueError("an RNG is required unless noise_free is set")
        electrons = _sample_poisson(rng, lam)
        readout = rng.normal(bias, np.sqrt(var_r))
    y = np.floor(cfg.gain * electrons + readout + 0.5)  # round half-up
    return np.clip(y, 0, cfg.saturation_level).astype(np.uint16)


def simulate_sensor(
    gt: HDRImage,
    cfg: SensorConfig,
    noise: SensorNoiseTruth,
    size: tuple[int, int],
    rng: Optional[np.random.Generator] = None,
    noise_free: bool = False,
    gt_transform: Optional[np.ndarray] = None,
) -> CFAImage:
    """Render one raw CFA frame of ``size`` (width, height) from the ground truth."""
    width, height = size
    xs, ys = np.meshgrid(np.arange(width, dtype=np.float64), np.arange(height, dtype=np.float64))
    cmap = channel_map(cfg.pattern, width, height)
    T = cfg.transform if gt_transform is None else np.asarray(gt_transform, dtype=np.float64)
    f = np.empty((height, width))
    for channel in ColorChannel:
        mask = cmap == int(channel)
        f[mask] = sample_scene(gt, T, xs[mask], ys[mask], channel)
    a = noise.nonuniformity_frame(width, height)
    bias = noise.bias_frame(width, height)
    var_r = noise.readout_var_frame(width, height)
    per_pixel = SensorNoiseTruth(bias_dv=bias, readout_var_dv2=var_r, nonuniformity=a)
    y = expose(f, cfg, per_pixel, rng, noise_free=noise_free)
    return CFAImage(data=y.reshape(height, width), bit_depth=cfg.bit_depth, pattern=cfg.pattern)


def _compose_gt_transform(T: np.ndarray, ref_size, gt_size) -> np.ndarray:
    """Sensor->reference transform composed with the reference->ground-truth scaling."""
    ref_w, ref_h = ref_size
    gt_w, gt_h = gt_size
    if (ref_w, ref_h) == (gt_w, gt_h):
        return T
    sx = gt_w / ref_w
    sy = gt_h / ref_h
    S = np.array([[sx, 0.0, 0.5 * (sx - 1.0)], [0.0, sy, 0.5 * (sy - 1.0)]])
    out = S[:, :2] @ T
    out[:, 2] += S[:, 2]
    return out


def simulate_rig(gt: HDRImage, rig: RigSpec) -> tuple[list[CFAImage], list[SensorConfig]]:
    """One frame per sensor with independent noise streams, plus the configs used."""
    ref_size = rig.reference_size or (gt.width, gt.height)
    frames = []
    for cfg, noise, size in zip(rig.sensors, rig.noise, rig.sensor_sizes):
        rng = None if rig.noise_free else sensor_rng(rig.seed, cfg.sensor_id)
        T = _compose_gt_transform(cfg.transform, ref_size, (gt.width, gt.height))
        frames.append(
            simulate_sensor(gt, cfg, noise, size, rng, noise_free=rig.noise_free, gt_transform=T)
        )
    return frames, list(rig.sensors)
