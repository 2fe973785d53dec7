"""Radiometric conversion of raw digital values into radiance samples.

A digital value y at pixel i of sensor s estimates the radiant power
(photo-induced electrons per second) as

    f_hat = (y - b_i) / (g * t * a_i * n)

where b is the bias frame, g the sensor gain (DV per electron), t the
exposure time, a the per-pixel non-uniformity and n the exposure scaling.
The Poisson + Gaussian-readout noise model gives the variance estimate

    sigma^2 = (g^2 * t * a * n * max(f_hat, 0) + Var[r]) / (g * t * a * n)^2

with Var[r] the calibrated readout variance in DV^2. Negative f_hat values
from readout noise in dark pixels are deliberately preserved: clamping them
would bias dark regions upward once the per-pixel fits average many samples.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .bayer import BayerPattern, ColorChannel, channel_map
from .images import CFAImage, FloatFrame
from .validation import ShapeMismatchError, check_positive


class ConfigurationError(ValueError):
    """Invalid sensor configuration (non-positive conversion denominator etc.)."""


@dataclass(frozen=True)
class SensorConfig:
    """Per-sensor capture parameters and the sensor-to-reference transform.

    ``transform`` is a 2x3 affine matrix mapping sensor pixel centers
    (column, row) to virtual reference coordinates.
    """

    sensor_id: int
    exposure_time: float          # seconds
    gain: float                   # DV per electron
    exposure_scaling: float       # fraction of incident light, (0, 1]
    transform: np.ndarray         # 2x3
    saturation_level: int         # DV
    bit_depth: int
    pattern: BayerPattern
    black_level: float = 0.0      # nominal black in DV, used by heuristics
    defective: Optional[np.ndarray] = None  # linear pixel indices to discard

    def __post_init__(self):
        check_positive("exposure_time", self.exposure_time)
        check_positive("gain", self.gain)
        if not 0 < self.exposure_scaling <= 1:
            raise ConfigurationError(
                f"exposure_scaling must be in (0, 1], got {self.exposure_scaling}"
            )
        T = np.asarray(self.transform, dtype=np.float64)
        if T.shape != (2, 3):
            raise ConfigurationError(f"transform must be 2x3, got shape {T.shape}")
        det = T[0, 0] * T[1, 1] - T[0, 1] * T[1, 0]
        if abs(det) <= 1e-9:
            raise ConfigurationError(f"transform is not invertible (|det| = {abs(det):g})")
        object.__setattr__(self, "transform", T)
        if not 8 <= self.bit_depth <= 16:
            raise ConfigurationError(f"bit_depth must be in [8, 16], got {self.bit_depth}")
        if not 0 < self.saturation_level <= (1 << self.bit_depth) - 1:
            raise ConfigurationError(
                f"saturation_level {self.saturation_level} outside {self.bit_depth}-bit range"
            )
        if self.defective is not None:
            object.__setattr__(
                self, "defective", np.asarray(self.defective, dtype=np.int64).ravel()
            )

    def apply_transform(self, x, y) -> tuple[np.ndarray, np.ndarray]:
        """Map sensor pixel-center coordinates to reference coordinates."""
        T = self.transform
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        return T[0, 0] * x + T[0, 1] * y + T[0, 2], T[1, 0] * x + T[1, 1] * y + T[1, 2]

    def invert_transform(self, X, Y) -> tuple[np.ndarray, np.ndarray]:
        """Map reference coordinates back to sensor pixel coordinates."""
        T = self.transform
        det = T[0, 0] * T[1, 1] - T[0, 1] * T[1, 0]
        u = np.asarray(X, dtype=np.float64) - T[0, 2]
        v = np.asarray(Y, dtype=np.float64) - T[1, 2]
        return (T[1, 1] * u - T[0, 1] * v) / det, (-T[1, 0] * u + T[0, 0] * v) / det


@dataclass(frozen=True)
class NoiseCalibration:
    """Calibrated noise model for one sensor at one (gain, exposure) setting."""

    bias: FloatFrame              # DV
    readout_variance: FloatFrame  # DV^2
    nonuniformity: FloatFrame     # unitless, mean ~= 1
    gain_estimate: float = 0.0    # DV per electron, informational

    def __post_init__(self):
        shapes = {
            self.bias.data.shape,
            self.readout_variance.data.shape,
            self.nonuniformity.data.shape,
        }
        if len(shapes) != 1:
            raise ShapeMismatchError(f"calibration frames disagree in shape: {shapes}")
        if np.any(self.readout_variance.data < 0):
            raise ValueError("readout variance must be non-negative everywhere")
        if np.any(self.nonuniformity.data <= 0):
            raise ValueError("non-uniformity must be positive everywhere")

    @property
    def shape(self) -> tuple[int, int]:
        return self.bias.data.shape

    @classmethod
    def uniform(
        cls,
        width: int,
        height: int,
        bias: float = 0.0,
        readout_variance: float = 0.0,
        nonuniformity: float = 1.0,
        gain_estimate: float = 0.0,
    ) -> "NoiseCalibration":
        return cls(
            bias=FloatFrame.full(width, height, bias),
            readout_variance=FloatFrame.full(width, height, readout_variance),
            nonuniformity=FloatFrame.full(width, height, nonuniformity),
            gain_estimate=gain_estimate,
        )


@dataclass(frozen=True)
class RadianceSample:
    """One unsaturated observation mapped onto the virtual grid."""

    position: tuple[float, float]
    channel: ColorChannel
    value: float    # electrons/second
    sigma: float    # electrons/second, > 0
    sensor_id: int


class RadianceSamples:
    """Column-oriented collection of radiance samples.

    Stored as parallel arrays for the reconstruction kernels; indexing
    returns individual :class:`RadianceSample` records.
    """

    def __init__(self, positions, channels, values, sigmas, sensor_ids):
        self.positions = np.ascontiguousarray(positions, dtype=np.float64).reshape(-1, 2)
        n = len(self.positions)
        self.channels = np.ascontiguousarray(channels, dtype=np.uint8).reshape(n)
        self.values = np.ascontiguousarray(values, dtype=np.float64).reshape(n)
        self.sigmas = np.ascontiguousarray(sigmas, dtype=np.float64).reshape(n)
        self.sensor_ids = np.ascontiguousarray(sensor_ids, dtype=np.int32).reshape(n)
        if np.any(self.sigmas <= 0):
            raise ValueError("sample sigmas must be positive")
        if not np.all(np.isfinite(self.positions)):
            raise ValueError("sample positions must be finite")
        self._indexes: dict[int, "SampleIndex"] = {}

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, k: int) -> RadianceSample:
        return RadianceSample(
            position=(float(self.positions[k, 0]), float(self.positions[k, 1])),
            channel=ColorChannel(int(self.channels[k])),
            value=float(self.values[k]),
            sigma=float(self.sigmas[k]),
            sensor_id=int(self.sensor_ids[k]),
        )

    @classmethod
    def empty(cls) -> "RadianceSamples":
        z = np.empty(0)
        return cls(np.empty((0, 2)), z, z, z, z)

    @classmethod
    def concatenate(cls, parts: list["RadianceSamples"]) -> "RadianceSamples":
        parts = [p for p in parts if len(p)]
        if not parts:
            return cls.empty()
        return cls(
            np.concatenate([p.positions for p in parts]),
            np.concatenate([p.channels for p in parts]),
            np.concatenate([p.values for p in parts]),
            np.concatenate([p.sigmas for p in parts]),
            np.concatenate([p.sensor_ids for p in parts]),
        )

    def index(self, channel: ColorChannel) -> "SampleIndex":
        """Cell-bucketed spatial index over the samples of one channel."""
        key = int(channel)
        if key not in self._indexes:
            self._indexes[key] = SampleIndex(self, ColorChannel(key))
        return self._indexes[key]


class SampleIndex:
    """Unit-cell bucket grid over one channel's samples (CSR layout).

    Samples are stored cell-ordered and interleaved as rows of
    ``packed = [x, y, value, variance]`` so a neighborhood scan touches
    contiguous memory. Iteration order within :func:`hdrfuse.lpa.gather` and
    the reconstruction kernel is identical (cells scanned row-major, rows in
    storage order), which keeps their floating-point accumulation in sync.
    """

    def __init__(self, samples: RadianceSamples, channel: ColorChannel):
        sel = np.flatnonzero(samples.channels == int(channel))
        x = samples.positions[sel, 0]
        y = samples.positions[sel, 1]
        if len(sel):
            self.x0 = int(np.floor(x.min()))
            self.y0 = int(np.floor(y.min()))
            nx = int(np.floor(x.max())) - self.x0 + 1
            ny = int(np.floor(y.max())) - self.y0 + 1
        else:
            self.x0 = self.y0 = 0
            nx = ny = 1
        self.nx, self.ny = nx, ny
        cell = (np.floor(y).astype(np.int64) - self.y0) * nx + (
            np.floor(x).astype(np.int64) - self.x0
        )
        order = np.argsort(cell, kind="stable")
        counts = np.bincount(cell, minlength=nx * ny)
        self.cell_start = np.zeros(nx * ny + 1, dtype=np.int64)
        np.cumsum(counts, out=self.cell_start[1:])
        self.packed = np.ascontiguousarray(
            np.column_stack(
                [x[order], y[order], samples.values[sel][order], samples.sigmas[sel][order] ** 2]
            )
        )

    @property
    def x(self) -> np.ndarray:
        return self.packed[:, 0]

    @property
    def y(self) -> np.ndarray:
        return self.packed[:, 1]

    @property
    def values(self) -> np.ndarray:
        return self.packed[:, 2]

    @property
    def variances(self) -> np.ndarray:
        return self.packed[:, 3]

    def __len__(self) -> int:
        return len(self.packed)


def _conversion_denominator(cfg: SensorConfig, a: np.ndarray) -> np.ndarray:
    denom = cfg.gain * cfg.exposure_time * cfg.exposure_scaling * a
    if np.any(denom <= 0) or not np.all(np.isfinite(denom)):
        raise ConfigurationError("non-positive conversion denominator g*t*a*n")
    return denom


def estimate_radiance(y, i, cfg: SensorConfig, cal: NoiseCalibration):
    """Radiant power estimate (electrons/second) for digital value(s) y at pixel index i.

    Accepts scalars or arrays; negative results for dark pixels are preserved.
    """
    i = np.asarray(i, dtype=np.int64)
    b = cal.bias.data.ravel()[i]
    a = cal.nonuniformity.data.ravel()[i]
    return (np.asarray(y, dtype=np.float64) - b) / _conversion_denominator(cfg, a)


def estimate_variance(f_hat, i, cfg: SensorConfig, cal: NoiseCalibration):
    """Variance of the radiance estimate, (electrons/second)^2.

    The shot-noise term substitutes the noisy estimate for the unknown true
    radiance and is clamped at zero so the variance never drops below the
    readout floor.
    """
    i = np.asarray(i, dtype=np.int64)
    a = cal.nonuniformity.data.ravel()[i]
    var_r = cal.readout_variance.data.ravel()[i]
    g, t, n = cfg.gain, cfg.exposure_time, cfg.exposure_scaling
    denom = _conversion_denominator(cfg, a) ** 2
    shot = g * g * t * a * n * np.maximum(np.asarray(f_hat, dtype=np.float64), 0.0)
    return (shot + var_r) / denom


def saturation_mask(img: CFAImage, cfg: SensorConfig) -> np.ndarray:
    """Boolean (h, w) mask, true where the digital value reached saturation."""
    return img.data >= cfg.saturation_level


def frame_to_samples(img: CFAImage, cfg: SensorConfig, cal: NoiseCalibration) -> RadianceSamples:
    """Convert one raw frame into radiance samples on the virtual grid.

    One sample per unsaturated, non-defective pixel; positions are the
    transformed pixel centers. Sigmas get a quantization floor of
    (1/sqrt(12)) DV so the sample invariant sigma > 0 holds even for
    zero-noise synthetic frames (the model variance is otherwise untouched).
    """
    if cal.shape != img.data.shape:
        raise ShapeMismatchError(
            f"dimension mismatch: calibration {cal.shape} vs frame {img.data.shape}"
        )
    keep = ~saturation_mask(img, cfg)
    if cfg.defective is not None and len(cfg.defective):
        keep.ravel()[cfg.defective] = False
    idx = np.flatnonzero(keep.ravel())
    if not len(idx):
        return RadianceSamples.empty()
    h, w = img.data.shape
    ys, xs = np.divmod(idx, w)
    X, Y = cfg.apply_transform(xs, ys)
    values = estimate_radiance(img.data.ravel()[idx], idx, cfg, cal)
    variances = estimate_variance(values, idx, cfg, cal)
    a = cal.nonuniformity.data.ravel()[idx]
    quant_var = (1.0 / 12.0) / _conversion_denominator(cfg, a) ** 2
    sigmas = np.sqrt(np.maximum(variances, quant_var))
    channels = channel_map(cfg.pattern, w, h).ravel()[idx]
    return RadianceSamples(
        positions=np.column_stack([X, Y]),
        channels=channels,
        values=values,
        sigmas=sigmas,
        sensor_ids=np.full(len(idx), cfg.sensor_id, dtype=np.int32),
    )


def frames_to_samples(
    frames: list[CFAImage], configs: list[SensorConfig], cals: list[NoiseCalibration]
) -> RadianceSamples:
    """All sensors' samples merged into one collection."""
    if not (len(frames) == len(configs) == len(cals)):
        raise ShapeMismatchError(
            f"count mismatch: {len(frames)} frames, {len(configs)} configs, {len(cals)} calibrations"
        )
    return RadianceSamples.concatenate(
        [frame_to_samples(f, cfg, cal) for f, cfg, cal in zip(frames, configs, cals)]
    )
