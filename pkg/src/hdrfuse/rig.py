"""Rig configuration files: one JSON document describing every sensor.

Parsing is strict: unknown keys are errors, so a typo cannot silently fall
back to a default. Noise-model entries (bias, readout variance,
non-uniformity) are either inline scalars or paths to PFM frames, resolved
relative to the config file; paths are checked at load time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .bayer import BayerPattern
from .images import FloatFrame
from .pnm import read_pfm
from .radiometry import NoiseCalibration, SensorConfig
from .simulate import SensorNoiseTruth
from .validation import ShapeMismatchError

SCHEMA_VERSION = 1

_TOP_KEYS = {"schema_version", "sensors", "reconstruction"}
_SENSOR_KEYS = {
    "id",
    "exposure_time_s",
    "gain_dv_per_e",
    "exposure_scaling",
    "transform",
    "saturation_level",
    "bit_depth",
    "bayer_phase",
    "black_level_dv",
    "width",
    "height",
    "bias",
    "readout_variance",
    "nonuniformity",
}
_SENSOR_REQUIRED = {
    "id",
    "exposure_time_s",
    "gain_dv_per_e",
    "exposure_scaling",
    "transform",
    "saturation_level",
    "bit_depth",
    "bayer_phase",
}
_RECON_KEYS = {"order", "scale", "alpha", "max_radius", "grad_window"}


class ConfigError(ValueError):
    """Invalid rig configuration (CLI exit code 2)."""


def _check_keys(block: dict, allowed: set, where: str) -> None:
    unknown = set(block) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(sorted(unknown))}")


@dataclass(frozen=True)
class NoiseEntry:
    """Scalar value or a frame loaded from a PFM path."""

    value: Union[float, np.ndarray]

    def frame(self, width: int, height: int, what: str) -> np.ndarray:
        if np.isscalar(self.value):
            return np.full((height, width), float(self.value))
        arr = np.asarray(self.value)
        if arr.shape != (height, width):
            raise ShapeMismatchError(
                f"dimension mismatch: {what} frame is {arr.shape}, sensor is {(height, width)}"
            )
        return arr


def _load_noise_entry(raw, base: Path, what: str) -> NoiseEntry:
    if isinstance(raw, (int, float)):
        return NoiseEntry(float(raw))
    if isinstance(raw, str):
        path = (base / raw).resolve()
        if not path.exists():
            raise ConfigError(f"{what} path does not exist: {path}")
        frame = read_pfm(path)
        if not isinstance(frame, FloatFrame):
            raise ConfigError(f"{what} must be a single-channel (Pf) PFM: {path}")
        return NoiseEntry(frame.data)
    raise ConfigError(f"{what} must be a number or a PFM path, got {type(raw).__name__}")


@dataclass(frozen=True)
class RigSensor:
    config: SensorConfig
    size: Optional[tuple[int, int]]  # (width, height) when declared
    bias: NoiseEntry
    readout_variance: NoiseEntry
    nonuniformity: NoiseEntry

    def calibration(self, width: int, height: int) -> NoiseCalibration:
        return NoiseCalibration(
            bias=FloatFrame(self.bias.frame(width, height, "bias")),
            readout_variance=FloatFrame(
                self.readout_variance.frame(width, height, "readout_variance")
            ),
            nonuniformity=FloatFrame(
                self.nonuniformity.frame(width, height, "nonuniformity")
            ),
            gain_estimate=self.config.gain,
        )

    def noise_truth(self) -> SensorNoiseTruth:
        return SensorNoiseTruth(
            bias_dv=self.bias.value,
            readout_var_dv2=self.readout_variance.value,
            nonuniformity=self.nonuniformity.value,
        )


@dataclass(frozen=True)
class RigDefinition:
    sensors: list[RigSensor]
    reconstruction: dict
    path: Optional[Path] = None

    @property
    def configs(self) -> list[SensorConfig]:
        return [s.config for s in self.sensors]


def load_rig(path: Union[str, Path]) -> RigDefinition:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"rig config does not exist: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"rig config is not valid JSON: {e}") from None
    if not isinstance(doc, dict):
        raise ConfigError("rig config must be a JSON object")
    _check_keys(doc, _TOP_KEYS, "rig config")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version!r}, expected {SCHEMA_VERSION}")
    raw_sensors = doc.get("sensors")
    if not isinstance(raw_sensors, list) or not raw_sensors:
        raise ConfigError("rig config needs a non-empty 'sensors' list")

    base = path.parent
    sensors = []
    for i, block in enumerate(raw_sensors):
        where = f"sensors[{i}]"
        if not isinstance(block, dict):
            raise ConfigError(f"{where} must be an object")
        _check_keys(block, _SENSOR_KEYS, where)
        missing = _SENSOR_REQUIRED - set(block)
        if missing:
            raise ConfigError(f"{where} missing required key(s): {', '.join(sorted(missing))}")
        transform = block["transform"]
        if not isinstance(transform, list) or len(transform) != 6:
            raise ConfigError(f"{where}.transform must be 6 affine reals (row-major 2x3)")
        try:
            phase = BayerPattern(block["bayer_phase"])
        except ValueError:
            raise ConfigError(
                f"{where}.bayer_phase must be one of RGGB/BGGR/GRBG/GBRG, "
                f"got {block['bayer_phase']!r}"
            ) from None
        try:
            cfg = SensorConfig(
                sensor_id=int(block["id"]),
                exposure_time=float(block["exposure_time_s"]),
                gain=float(block["gain_dv_per_e"]),
                exposure_scaling=float(block["exposure_scaling"]),
                transform=np.asarray(transform, dtype=np.float64).reshape(2, 3),
                saturation_level=int(block["saturation_level"]),
                bit_depth=int(block["bit_depth"]),
                pattern=phase,
                black_level=float(block.get("black_level_dv", 0.0)),
            )
        except ValueError as e:
            raise ConfigError(f"{where}: {e}") from None
        size = None
        if ("width" in block) != ("height" in block):
            raise ConfigError(f"{where}: width and height must be given together")
        if "width" in block:
            size = (int(block["width"]), int(block["height"]))
        sensors.append(
            RigSensor(
                config=cfg,
                size=size,
                bias=_load_noise_entry(block.get("bias", 0.0), base, f"{where}.bias"),
                readout_variance=_load_noise_entry(
                    block.get("readout_variance", 0.0), base, f"{where}.readout_variance"
                ),
                nonuniformity=_load_noise_entry(
                    block.get("nonuniformity", 1.0), base, f"{where}.nonuniformity"
                ),
            )
        )

    recon = doc.get("reconstruction", {})
    if not isinstance(recon, dict):
        raise ConfigError("'reconstruction' must be an object")
    _check_keys(recon, _RECON_KEYS, "reconstruction")
    return RigDefinition(sensors=sensors, reconstruction=dict(recon), path=path)


def save_rig(rig_doc: dict, path: Union[str, Path]) -> None:
    """Write a rig document (already in schema form) as pretty JSON."""
    Path(path).write_text(json.dumps(rig_doc, indent=2) + "\n")


def sensor_to_block(sensor: RigSensor, overrides: Optional[dict] = None) -> dict:
    """Schema block for one sensor, with noise entries as given overrides or scalars."""
    cfg = sensor.config
    block = {
        "id": cfg.sensor_id,
        "exposure_time_s": cfg.exposure_time,
        "gain_dv_per_e": cfg.gain,
        "exposure_scaling": cfg.exposure_scaling,
        "transform": [float(v) for v in cfg.transform.ravel()],
        "saturation_level": cfg.saturation_level,
        "bit_depth": cfg.bit_depth,
        "bayer_phase": cfg.pattern.value,
        "black_level_dv": cfg.black_level,
    }
    if sensor.size is not None:
        block["width"], block["height"] = sensor.size
    for key, entry in (
        ("bias", sensor.bias),
        ("readout_variance", sensor.readout_variance),
        ("nonuniformity", sensor.nonuniformity),
    ):
        if np.isscalar(entry.value):
            block[key] = float(entry.value)
    if overrides:
        block.update(overrides)
    return block
