"""hdrfuse: HDR reconstruction directly from multi-sensor raw Bayer frames.

Misaligned, differently-exposed raw captures are converted into radiance
samples with per-sample variances, mapped onto a common virtual grid, and
fused by per-pixel local polynomial fits: demosaicing, resampling, HDR
assembly and denoising happen in one filtering step. The package also ships
the calibration estimators and the camera simulator needed to validate the
pipeline end to end, plus reference pipeline baselines and image metrics.
"""

__version__ = "0.1.0"

from .bayer import BayerPattern, ColorChannel, channel_at
from .calibration import (
    FrameStack,
    GainEstimate,
    compute_bias_frame,
    compute_readout_variance,
    estimate_exposure_scaling,
    estimate_gain,
    estimate_nonuniformity,
)
from .images import CFAImage, FloatFrame, HDRImage
from .lpa import (
    LocalPolynomialRegressor,
    PolyFit,
    ReconstructionParams,
    basis_row,
    gather,
    reconstruct_channel,
    reconstruct_frame,
    window_weight,
    wls_fit,
)
from .baselines import (
    AlignmentError,
    debayer_bilinear,
    fuse_debayer_first,
    fuse_debayer_last,
)
from .metrics import MetricsReport, compute_report, psnr, region_masks, rmse_log
from .pnm import PnmParseError, read_pfm, read_pgm16, write_pfm, write_pgm16
from .radiometry import (
    NoiseCalibration,
    RadianceSample,
    RadianceSamples,
    SensorConfig,
    estimate_radiance,
    estimate_variance,
    frame_to_samples,
    frames_to_samples,
    saturation_mask,
)
from .simulate import (
    RigSpec,
    SensorNoiseTruth,
    expose,
    sample_scene,
    sensor_rng,
    simulate_rig,
    simulate_sensor,
)
from .steering import (
    AdaptiveParams,
    SteeringField,
    calpa_reconstruct,
    compute_steering_field,
    gradient_field,
    steering_from_gradients,
)

__all__ = [
    "AdaptiveParams",
    "AlignmentError",
    "BayerPattern",
    "CFAImage",
    "ColorChannel",
    "FloatFrame",
    "FrameStack",
    "GainEstimate",
    "HDRImage",
    "LocalPolynomialRegressor",
    "MetricsReport",
    "NoiseCalibration",
    "PnmParseError",
    "PolyFit",
    "RadianceSample",
    "RadianceSamples",
    "ReconstructionParams",
    "RigSpec",
    "SensorConfig",
    "SensorNoiseTruth",
    "SteeringField",
    "basis_row",
    "calpa_reconstruct",
    "channel_at",
    "compute_bias_frame",
    "compute_readout_variance",
    "compute_report",
    "compute_steering_field",
    "debayer_bilinear",
    "estimate_exposure_scaling",
    "estimate_gain",
    "estimate_nonuniformity",
    "estimate_radiance",
    "estimate_variance",
    "expose",
    "frame_to_samples",
    "frames_to_samples",
    "fuse_debayer_first",
    "fuse_debayer_last",
    "gather",
    "gradient_field",
    "psnr",
    "read_pfm",
    "read_pgm16",
    "reconstruct_channel",
    "reconstruct_frame",
    "region_masks",
    "rmse_log",
    "sample_scene",
    "saturation_mask",
    "sensor_rng",
    "simulate_rig",
    "simulate_sensor",
    "steering_from_gradients",
    "window_weight",
    "wls_fit",
    "write_pfm",
    "write_pgm16",
]
