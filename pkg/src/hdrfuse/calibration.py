"""Noise-model calibration from stacks of black frames and flat fields.

Black frames (lens covered) give the bias frame as the per-pixel mean and
the readout variance as the per-pixel sample variance. Flat fields give the
gain through the Poisson mean-variance identity

    (Var[y] - Var[b]) / (E[y] - E[b]) = g,

the exposure scalings as spatial means of pixel-wise radiance ratios against
a reference sensor, and the photo-response non-uniformity as the per-pixel
deviation of the flat radiance from its channel mean.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .bayer import ColorChannel, channel_map
from .images import CFAImage, FloatFrame
from .radiometry import NoiseCalibration, SensorConfig
from .validation import ShapeMismatchError


@dataclass(frozen=True)
class FrameStack:
    """Repeated captures at fixed settings: kind is 'black' or 'flatfield'."""

    frames: Sequence[CFAImage]
    kind: str

    def __post_init__(self):
        if self.kind not in ("black", "flatfield"):
            raise ValueError(f"kind must be 'black' or 'flatfield', got {self.kind!r}")
        if len(self.frames) < 2:
            raise ValueError(f"a frame stack needs at least 2 frames, got {len(self.frames)}")
        shapes = {f.data.shape for f in self.frames}
        if len(shapes) != 1:
            raise ShapeMismatchError(f"dimension mismatch within stack: {shapes}")

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def shape(self) -> tuple[int, int]:
        return self.frames[0].data.shape

    def as_array(self) -> np.ndarray:
        """(n_frames, h, w) float64 cube."""
        return np.stack([f.data.astype(np.float64) for f in self.frames])

    def mean(self) -> np.ndarray:
        return self.as_array().mean(axis=0)

    def variance(self) -> np.ndarray:
        return self.as_array().var(axis=0, ddof=1)


def _require_kind(stack: FrameStack, kind: str) -> None:
    if stack.kind != kind:
        raise ValueError(f"expected a {kind} stack, got {stack.kind!r}")


def compute_bias_frame(stack: FrameStack) -> FloatFrame:
    """Per-pixel mean of a black stack, DV."""
    _require_kind(stack, "black")
    return FloatFrame(stack.mean())


def compute_readout_variance(stack: FrameStack) -> FloatFrame:
    """Per-pixel unbiased sample variance of a black stack, DV^2."""
    _require_kind(stack, "black")
    return FloatFrame(stack.variance())


def _valid_flat_mask(flat_mean: np.ndarray, cfg: SensorConfig, read_var: np.ndarray) -> np.ndarray:
    """Pixels in the linear mid-range: above black + 10 sigma_read, below 0.9 saturation."""
    lo = cfg.black_level + 10.0 * np.sqrt(np.maximum(read_var, 0.0))
    return (flat_mean > lo) & (flat_mean < 0.9 * cfg.saturation_level)


@dataclass(frozen=True)
class GainEstimate:
    """Spatially averaged gain with its spatial spread and per-channel breakdown."""

    gain: float               # DV per electron
    spatial_std: float
    per_channel: dict
    n_valid: int


def estimate_gain(flat: FrameStack, black: FrameStack, cfg: SensorConfig) -> GainEstimate:
    """Photon-transfer gain from a flat stack and a black stack.

    The variance and mean differences are formed per pixel, their ratio
    averaged over valid (well-exposed) pixels. A noise-free stack is flagged
    as degenerate and reports zero gain.
    """
    _require_kind(flat, "flatfield")
    _require_kind(black, "black")
    if flat.shape != black.shape:
        raise ShapeMismatchError(
            f"dimension mismatch: flat {flat.shape} vs black {black.shape}"
        )
    flat_mean = flat.mean()
    flat_var = flat.variance()
    black_mean = black.mean()
    black_var = black.variance()

    mean_diff = flat_mean - black_mean
    valid = _valid_flat_mask(flat_mean, cfg, black_var) & (mean_diff > 0)
    if valid.sum() < 0.5 * valid.size:
        raise ValueError(
            "flat field too dark: mean does not exceed black level on most pixels"
        )
    ratio = (flat_var - black_var)[valid] / mean_diff[valid]
    gain = float(ratio.mean())
    if np.all(flat_var == 0) and np.all(black_var == 0):
        warnings.warn("degenerate noise-free stacks: estimated gain is 0", stacklevel=2)
        gain = 0.0
    h, w = flat.shape
    cmap = channel_map(cfg.pattern, w, h)
    per_channel = {}
    for channel in ColorChannel:
        sel = valid & (cmap == int(channel))
        if sel.any():
            per_channel[channel.name] = float(
                ((flat_var - black_var)[sel] / mean_diff[sel]).mean()
            )
    return GainEstimate(
        gain=gain,
        spatial_std=float(ratio.std(ddof=1)) if len(ratio) > 1 else 0.0,
        per_channel=per_channel,
        n_valid=int(valid.sum()),
    )


def _trimmed_mean(values: np.ndarray, keep: float = 0.9) -> float:
    """Mean of the central ``keep`` fraction; reduces to the mean on clean data."""
    values = np.sort(values)
    drop = int(round(len(values) * (1.0 - keep) / 2.0))
    if drop:
        values = values[drop:-drop]
    return float(values.mean())


def _provisional_radiance(
    flat: FrameStack, cfg: SensorConfig, cal: NoiseCalibration
) -> tuple[np.ndarray, np.ndarray]:
    """Flat-stack radiance with unity scaling/uniformity, plus its valid mask."""
    mean = flat.mean()
    valid = _valid_flat_mask(mean, cfg, cal.readout_variance.data)
    f_hat = (mean - cal.bias.data) / (cfg.gain * cfg.exposure_time)
    return f_hat, valid


def estimate_exposure_scaling(
    flats: Sequence[FrameStack],
    configs: Sequence[SensorConfig],
    cals: Sequence[NoiseCalibration],
    ref_sensor: int = 0,
) -> np.ndarray:
    """Per-sensor exposure scalings from pixel-wise flat radiance ratios.

    The reference sensor is pinned at exactly 1. Provisional conversions use
    n = 1, which cancels in the ratio. Flat stacks may use different
    exposure times per sensor (already divided out by the conversion).
    Ratios are aggregated with a 90% trimmed mean to shed stray
    saturated/dark pixels.
    """
    if not (len(flats) == len(configs) == len(cals)):
        raise ShapeMismatchError("flats, configs and cals must align")
    ref_f, ref_valid = _provisional_radiance(flats[ref_sensor], configs[ref_sensor], cals[ref_sensor])
    scalings = np.empty(len(flats))
    for s, (flat, cfg, cal) in enumerate(zip(flats, configs, cals)):
        if s == ref_sensor:
            scalings[s] = 1.0
            continue
        f_hat, valid = _provisional_radiance(flat, cfg, cal)
        both = valid & ref_valid & (ref_f > 0)
        if both.sum() < 100:
            raise ValueError(
                f"sensor {cfg.sensor_id}: too few well-exposed pixels shared with the reference"
            )
        scalings[s] = _trimmed_mean(f_hat[both] / ref_f[both])
    return scalings


def estimate_nonuniformity(
    flat: FrameStack,
    scaling: float,
    cfg: SensorConfig,
    cal: NoiseCalibration,
) -> FloatFrame:
    """Per-pixel photo-response non-uniformity from a flat stack.

    The bias-subtracted flat mean is converted with the estimated scaling and
    divided by the per-channel flat radiance (this sensor's own estimate of
    the rig-wide flat level), so a spectrally colored illuminant does not
    leak into the field. Invalid pixels get 1; the spatial mean is
    normalized to exactly 1.
    """
    _require_kind(flat, "flatfield")
    mean = flat.mean()
    valid = _valid_flat_mask(mean, cfg, cal.readout_variance.data)
    if valid.sum() < 0.25 * valid.size:
        raise ValueError("flat field too dark or saturated for non-uniformity estimation")
    f_hat = (mean - cal.bias.data) / (cfg.gain * cfg.exposure_time * scaling)
    h, w = mean.shape
    cmap = channel_map(cfg.pattern, w, h)
    a = np.ones_like(f_hat)
    for channel in ColorChannel:
        sel = valid & (cmap == int(channel))
        if not sel.any():
            continue
        level = f_hat[sel].mean()
        if level <= 0:
            raise ValueError(f"near-zero flat signal in channel {channel.name}")
        a[sel] = f_hat[sel] / level
    a /= a.mean()
    return FloatFrame(a)


def calibrate_sensor(
    black: FrameStack,
    flat: FrameStack,
    cfg: SensorConfig,
    scaling: Optional[float] = None,
) -> NoiseCalibration:
    """Full single-sensor calibration bundle from one black and one flat stack."""
    bias = compute_bias_frame(black)
    read_var = compute_readout_variance(black)
    gain = estimate_gain(flat, black, cfg)
    partial = NoiseCalibration(
        bias=bias,
        readout_variance=read_var,
        nonuniformity=FloatFrame(np.ones(black.shape)),
        gain_estimate=gain.gain,
    )
    nonuni = estimate_nonuniformity(flat, scaling if scaling is not None else 1.0, cfg, partial)
    return NoiseCalibration(
        bias=bias,
        readout_variance=read_var,
        nonuniformity=nonuni,
        gain_estimate=gain.gain,
    )
