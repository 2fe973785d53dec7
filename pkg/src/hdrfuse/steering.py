"""Structure-adaptive second pass: steer the window supports from gradients.

An isotropic first pass (order >= 1) estimates the local gradient field on
the output grid. Around each output pixel the weighted gradients are
summarized by a truncated SVD; its singular values and second right-singular
vector give an orientation theta, an elongation sigma = (s1+l1)/(s2+l1) and
a scaling gamma = ((s1*s2 + l2)/N)**alpha, assembled into the gradient
covariance

    C_j = gamma * U_theta diag(sigma, 1/sigma) U_theta^T.

The second pass then uses the per-pixel smoothing matrix H_j = h * C_j^{-1},
i.e. the covariance itself enters the window exponent, so supports shrink
across the dominant gradient, stretch along edges, and grow in flat areas
where the gradient energy is small.

Because the color planes of natural images share edge structure, the field
is estimated once from the densely-sampled G channel and reused for R and B,
which keeps edges aligned across channels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from .bayer import ColorChannel
from .images import HDRImage
from .lpa import SUPPORT_SIGMAS, ReconstructionParams, reconstruct_channel
from .radiometry import RadianceSamples
from .validation import check_positive


@dataclass(frozen=True)
class AdaptiveParams:
    """Steering knobs on top of a base reconstruction (order >= 1).

    ``alpha`` trades denoising against detail: 0 disables the scaling
    adaptation entirely. ``gradient_scale`` normalizes gradient magnitudes
    before the SVD so alpha acts independently of the absolute radiance
    units; None derives it from the first pass (99.5th percentile of the
    G-channel radiance).
    """

    alpha: float = 0.005
    lambda1: float = 1.0
    lambda2: float = 0.001
    gradient_window: int = 9
    sigma_max: float = 50.0
    share_steering: bool = True
    gradient_scale: Optional[float] = None
    base: ReconstructionParams = field(default_factory=ReconstructionParams)

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if self.lambda1 < 0:
            raise ValueError(f"lambda1 must be >= 0, got {self.lambda1}")
        check_positive("lambda2", self.lambda2)
        if self.gradient_window < 3 or self.gradient_window % 2 == 0:
            raise ValueError(
                f"gradient_window must be odd and >= 3, got {self.gradient_window}"
            )
        if self.base.order < 1:
            raise ValueError("steering needs a base reconstruction of order >= 1")


@dataclass(frozen=True)
class SteeringField:
    """Per-output-pixel window parameters (theta in radians, sigma >= 1, gamma > 0)."""

    theta: np.ndarray
    sigma: np.ndarray
    gamma: np.ndarray

    def covariance_entries(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(C11, C12, C22) planes of C = gamma * U diag(sigma, 1/sigma) U^T."""
        ct = np.cos(self.theta)
        st = np.sin(self.theta)
        s = self.sigma
        c11 = self.gamma * (s * ct * ct + st * st / s)
        c12 = self.gamma * (ct * st) * (1.0 / s - s)
        c22 = self.gamma * (s * st * st + ct * ct / s)
        return c11, c12, c22

    def matrix(self, y: int, x: int) -> np.ndarray:
        c11, c12, c22 = (p[y, x] for p in self.covariance_entries())
        return np.array([[c11, c12], [c12, c22]])

    def kernel_inputs(self, scale: float):
        """Per-pixel H^{-1} entries and base radii for window scale h.

        H_j = h * C_j^{-1}, hence H_j^{-1} = C_j / h; the support is cut at
        3 times the window's longest axis sqrt(h * sigma / gamma).
        """
        c11, c12, c22 = self.covariance_entries()
        r0 = SUPPORT_SIGMAS * np.sqrt(scale * self.sigma / self.gamma)
        return (
            (c11 / scale).ravel(),
            (c12 / scale).ravel(),
            (c22 / scale).ravel(),
            r0.ravel(),
        )


def gradient_field(
    samples: RadianceSamples,
    out_size: tuple[int, int],
    params: ReconstructionParams,
    channel: ColorChannel = ColorChannel.G,
    ref_size: Optional[tuple[int, int]] = None,
):
    """Isotropic first pass: radiance plane plus its two gradient planes."""
    if params.order < 1:
        raise ValueError("gradient estimation needs order >= 1")
    return reconstruct_channel(samples, out_size, params, channel, ref_size)


def steering_from_gradients(
    grads: tuple[np.ndarray, np.ndarray],
    location: tuple[int, int],
    params: AdaptiveParams,
    gradient_scale: float = 1.0,
):
    """Steering parameters at one output pixel; reference implementation.

    ``location`` is (x, y) on the output grid. Returns (theta, sigma, gamma,
    C) with C the assembled 2x2 covariance. An all-NaN window degenerates to
    identity steering.
    """
    gx, gy = grads
    x, y = int(location[0]), int(location[1])
    half = params.gradient_window // 2
    wstd = params.gradient_window / 4.0
    h, w = gx.shape
    rows = []
    for dy in range(-half, half + 1):
        iy = y + dy
        if not 0 <= iy < h:
            continue
        for dx in range(-half, half + 1):
            ix = x + dx
            if not 0 <= ix < w:
                continue
            g = (gx[iy, ix] / gradient_scale, gy[iy, ix] / gradient_scale)
            if not (math.isfinite(g[0]) and math.isfinite(g[1])):
                continue
            wgt = math.exp(-(dx * dx + dy * dy) / (2.0 * wstd * wstd))
            rows.append((math.sqrt(wgt) * g[0], math.sqrt(wgt) * g[1]))
    if not rows:
        return 0.0, 1.0, 1.0, np.eye(2)
    G = np.array(rows)
    _, svals, vt = np.linalg.svd(G, full_matrices=False)
    s1 = float(svals[0])
    s2 = float(svals[1]) if len(svals) > 1 else 0.0
    v = vt[-1] if len(svals) > 1 else np.array([-vt[0, 1], vt[0, 0]])
    theta = math.atan2(v[0], v[1])
    if theta <= -0.5 * math.pi:
        theta += math.pi
    elif theta > 0.5 * math.pi:
        theta -= math.pi
    denom = s2 + params.lambda1
    sigma = params.sigma_max if denom == 0 else min((s1 + params.lambda1) / denom, params.sigma_max)
    if s1 + params.lambda1 == 0:
        sigma = 1.0
    gamma = ((s1 * s2 + params.lambda2) / len(rows)) ** params.alpha
    ct, st = math.cos(theta), math.sin(theta)
    U = np.array([[ct, st], [-st, ct]])
    C = gamma * U @ np.diag([sigma, 1.0 / sigma]) @ U.T
    return theta, sigma, gamma, C


def compute_steering_field(
    grads: tuple[np.ndarray, np.ndarray],
    params: AdaptiveParams,
    gradient_scale: float = 1.0,
) -> SteeringField:
    """Steering parameters for every output pixel (compiled path)."""
    gx, gy = grads
    scale = float(gradient_scale)
    if scale <= 0 or not math.isfinite(scale):
        raise ValueError(f"gradient_scale must be positive, got {gradient_scale}")
    theta = np.empty_like(gx)
    sigma = np.empty_like(gx)
    gamma = np.empty_like(gx)
    _kernels.steering_field_kernel(
        np.ascontiguousarray(gx / scale),
        np.ascontiguousarray(gy / scale),
        params.gradient_window // 2,
        params.gradient_window / 4.0,
        params.lambda1,
        params.lambda2,
        params.alpha,
        params.sigma_max,
        theta,
        sigma,
        gamma,
    )
    return SteeringField(theta=theta, sigma=sigma, gamma=gamma)


def _auto_gradient_scale(values: np.ndarray) -> float:
    finite = values[np.isfinite(values)]
    if not len(finite):
        return 1.0
    scale = float(np.percentile(np.abs(finite), 99.5))
    return scale if scale > 0 else 1.0


def calpa_reconstruct(
    samples: RadianceSamples,
    out_size: tuple[int, int],
    params: AdaptiveParams,
    ref_size: Optional[tuple[int, int]] = None,
    return_field: bool = False,
):
    """Color-adaptive reconstruction: isotropic G pass, steering, steered RGB pass.

    Rank-deficient anisotropic fits fall back per pixel to the isotropic
    window before the usual radius/order ladder.
    """
    out_w, out_h = out_size
    base = params.base
    if base.order < 1:
        raise ValueError("CALPA needs base order >= 1 for the gradient pass")

    def field_for(channel: ColorChannel) -> SteeringField:
        val, gx, gy = gradient_field(samples, out_size, base, channel, ref_size)
        scale = params.gradient_scale or _auto_gradient_scale(val)
        return compute_steering_field((gx, gy), params, scale)

    shared = field_for(ColorChannel.G) if params.share_steering else None
    planes = np.empty((out_h, out_w, 3), dtype=np.float32)
    for channel in ColorChannel:
        fld = shared if params.share_steering else field_for(channel)
        steering = fld.kernel_inputs(base.channel_scale(channel))
        val, _, _ = reconstruct_channel(
            samples, out_size, base, channel, ref_size, steering=steering
        )
        planes[:, :, int(channel)] = np.maximum(val, 0.0).astype(np.float32)
    img = HDRImage(planes)
    if return_field:
        return img, shared if params.share_steering else None
    return img
