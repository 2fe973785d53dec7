"""Pipeline baselines: demosaic-then-fuse and fuse-then-demosaic.

Both decompose the reconstruction into sequential stages, which is exactly
what the joint estimator avoids; they exist as comparison points. The
debayer-first route tolerates arbitrary misalignment (it resamples demosaiced
planes) but interpolates across channels before saturation handling. The
debayer-last route fuses per CFA site and therefore requires the sensors to
share the Bayer phase on the output grid; it refuses misaligned rigs.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .bayer import BayerPattern, ColorChannel, channel_masks
from .images import CFAImage, HDRImage
from .radiometry import (
    NoiseCalibration,
    SensorConfig,
    estimate_radiance,
    estimate_variance,
    saturation_mask,
)
from .validation import ShapeMismatchError


class AlignmentError(ValueError):
    """Raised when a baseline that needs aligned rigs sees a misaligned one."""


# 3x3 stencils: green interpolates from the 4-neighborhood, red/blue from the
# classic quincunx kernel (exact 2- or 4-tap averages in the interior).
_K_G = np.array([[0.0, 0.25, 0.0], [0.25, 1.0, 0.25], [0.0, 0.25, 0.0]])
_K_RB = np.array([[0.25, 0.5, 0.25], [0.5, 1.0, 0.5], [0.25, 0.5, 0.25]])


def _conv3(arr: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Zero-padded 3x3 convolution via shifted views."""
    h, w = arr.shape
    padded = np.zeros((h + 2, w + 2))
    padded[1:-1, 1:-1] = arr
    out = np.zeros((h, w))
    for dy in range(3):
        for dx in range(3):
            k = kernel[dy, dx]
            if k:
                out += k * padded[dy : dy + h, dx : dx + w]
    return out


def debayer_bilinear_mosaic(
    values: np.ndarray, pattern: BayerPattern, valid: Optional[np.ndarray] = None
) -> np.ndarray:
    """Bilinear CFA interpolation of a real-valued mosaic to (h, w, 3).

    Missing channel values are the normalized average of the nearest
    same-channel neighbors; border pixels use whatever taps exist. Entries
    where ``valid`` is false (or the value is NaN) are treated as missing;
    sites with no usable neighbor at all come out NaN.
    """
    values = np.asarray(values, dtype=np.float64)
    h, w = values.shape
    finite = np.isfinite(values)
    if valid is not None:
        finite = finite & valid
    masks = channel_masks(pattern, w, h)
    out = np.empty((h, w, 3))
    for channel in ColorChannel:
        kernel = _K_G if channel == ColorChannel.G else _K_RB
        m = (masks[channel] & finite).astype(np.float64)
        num = _conv3(np.where(m > 0, values, 0.0), kernel)
        den = _conv3(m, kernel)
        with np.errstate(invalid="ignore"):
            out[:, :, int(channel)] = np.where(den > 0, num / den, np.nan)
    return out


def debayer_bilinear(img: CFAImage) -> np.ndarray:
    """Bilinear demosaic of a raw frame; returns (h, w, 3) in DV."""
    return debayer_bilinear_mosaic(img.data.astype(np.float64), img.pattern)


def _tent_weights(img: CFAImage, cfg: SensorConfig) -> np.ndarray:
    """Classic triangle weights on the raw digital value, zero when clipped."""
    y = img.data.astype(np.float64)
    return np.maximum(np.minimum(y - cfg.black_level, cfg.saturation_level - y), 0.0)


def fuse_debayer_first(
    frames: Sequence[CFAImage],
    configs: Sequence[SensorConfig],
    cals: Sequence[NoiseCalibration],
    out_size: Optional[tuple[int, int]] = None,
    ref_size: Optional[tuple[int, int]] = None,
) -> HDRImage:
    """Demosaic each sensor, convert to radiance, resample, tent-weighted mean.

    The weight of a contribution is the tent weight of the nearest native raw
    sample, so saturated regions of a sensor drop out of the blend. Output
    pixels no sensor covers (or where every weight is zero) are NaN.
    """
    if not (len(frames) == len(configs) == len(cals)):
        raise ShapeMismatchError("frames, configs and cals must align")
    ref_size = ref_size or (frames[0].width, frames[0].height)
    out_size = out_size or ref_size
    out_w, out_h = out_size
    ref_w, ref_h = ref_size
    xs = (np.arange(out_w) + 0.5) * (ref_w / out_w) - 0.5
    ys = (np.arange(out_h) + 0.5) * (ref_h / out_h) - 0.5
    QX, QY = np.meshgrid(xs, ys)

    acc = np.zeros((out_h, out_w, 3))
    wsum = np.zeros((out_h, out_w))
    for img, cfg, cal in zip(frames, configs, cals):
        h, w = img.data.shape
        dv = debayer_bilinear(img)
        idx = np.arange(h * w).reshape(h, w)
        radiance = np.stack(
            [estimate_radiance(dv[:, :, c], idx, cfg, cal) for c in range(3)], axis=-1
        )
        weights = _tent_weights(img, cfg)
        sx, sy = cfg.invert_transform(QX, QY)
        inside = (sx >= 0) & (sx <= w - 1) & (sy >= 0) & (sy <= h - 1)
        # nearest native sample for the weight
        nx = np.clip(np.round(sx).astype(np.int64), 0, w - 1)
        ny = np.clip(np.round(sy).astype(np.int64), 0, h - 1)
        wmap = np.where(inside, weights[ny, nx], 0.0)
        # bilinear resample of the radiance planes
        x0 = np.clip(np.floor(sx).astype(np.int64), 0, w - 1)
        y0 = np.clip(np.floor(sy).astype(np.int64), 0, h - 1)
        x1 = np.minimum(x0 + 1, w - 1)
        y1 = np.minimum(y0 + 1, h - 1)
        fx = np.clip(sx - x0, 0.0, 1.0)
        fy = np.clip(sy - y0, 0.0, 1.0)
        for c in range(3):
            plane = radiance[:, :, c]
            top = plane[y0, x0] * (1 - fx) + plane[y0, x1] * fx
            bot = plane[y1, x0] * (1 - fx) + plane[y1, x1] * fx
            val = top * (1 - fy) + bot * fy
            acc[:, :, c] += np.where(wmap > 0, wmap * val, 0.0)
        wsum += wmap
    with np.errstate(invalid="ignore"):
        fused = np.where(wsum[:, :, None] > 0, acc / wsum[:, :, None], np.nan)
    return HDRImage(np.maximum(fused, 0.0).astype(np.float32))


def _check_aligned(configs: Sequence[SensorConfig]) -> list[tuple[int, int]]:
    """Integer, phase-preserving translations or identity; else refuse."""
    shifts = []
    for cfg in configs:
        T = cfg.transform
        if np.max(np.abs(T[:, :2] - np.eye(2))) > 1e-9:
            raise AlignmentError(
                "baseline requires alignment: sensor transforms must be translations "
                "preserving the Bayer phase"
            )
        tx, ty = T[0, 2], T[1, 2]
        if abs(tx - round(tx)) > 1e-9 or abs(ty - round(ty)) > 1e-9:
            raise AlignmentError("baseline requires alignment: non-integer translation")
        itx, ity = int(round(tx)), int(round(ty))
        if itx % 2 or ity % 2:
            raise AlignmentError("baseline requires alignment: translation breaks the Bayer phase")
        shifts.append((itx, ity))
    return shifts


def fuse_debayer_last(
    frames: Sequence[CFAImage],
    configs: Sequence[SensorConfig],
    cals: Sequence[NoiseCalibration],
) -> HDRImage:
    """Inverse-variance fusion per CFA site, then one bilinear demosaic.

    Only valid for rigs whose sensors share the Bayer phase on the output
    grid; anything else raises :class:`AlignmentError`.
    """
    if not (len(frames) == len(configs) == len(cals)):
        raise ShapeMismatchError("frames, configs and cals must align")
    patterns = {cfg.pattern for cfg in configs}
    if len(patterns) != 1:
        raise AlignmentError("baseline requires alignment: sensors use different Bayer phases")
    shifts = _check_aligned(configs)
    ref_w, ref_h = frames[0].width, frames[0].height

    acc = np.zeros((ref_h, ref_w))
    wacc = np.zeros((ref_h, ref_w))
    for img, cfg, cal, (tx, ty) in zip(frames, configs, cals, shifts):
        h, w = img.data.shape
        idx = np.arange(h * w).reshape(h, w)
        f_hat = estimate_radiance(img.data, idx, cfg, cal)
        var = estimate_variance(f_hat, idx, cfg, cal)
        weight = np.where(saturation_mask(img, cfg) | (var <= 0), 0.0, 1.0 / np.maximum(var, 1e-300))
        # place sensor pixel (x, y) at output (x + tx, y + ty)
        ox_lo, oy_lo = max(tx, 0), max(ty, 0)
        sx_lo, sy_lo = max(-tx, 0), max(-ty, 0)
        nx = min(w - sx_lo, ref_w - ox_lo)
        ny = min(h - sy_lo, ref_h - oy_lo)
        if nx <= 0 or ny <= 0:
            continue
        osl = (slice(oy_lo, oy_lo + ny), slice(ox_lo, ox_lo + nx))
        ssl = (slice(sy_lo, sy_lo + ny), slice(sx_lo, sx_lo + nx))
        acc[osl] += (weight * f_hat)[ssl]
        wacc[osl] += weight[ssl]
    with np.errstate(invalid="ignore"):
        mosaic = np.where(wacc > 0, acc / np.maximum(wacc, 1e-300), np.nan)
    rgb = debayer_bilinear_mosaic(mosaic, configs[0].pattern)
    return HDRImage(np.maximum(rgb, 0.0).astype(np.float32))
