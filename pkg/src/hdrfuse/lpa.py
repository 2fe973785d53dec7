"""Local polynomial reconstruction of radiance from scattered, noisy samples.

Around each output location a polynomial of total order M (0, 1 or 2) is
fitted by weighted least squares to all unsaturated samples in a Gaussian
window, with weights

    W_H(dX) / sigma_k^2,   W_H(dX) = exp(-dX^T H^{-1} dX) / (2 pi det H)

so that better-exposed sensors dominate where they are reliable. The fitted
constant term is the radiance estimate; for M >= 1 the linear terms are the
local gradient. H = h*I gives isotropic supports; per-pixel anisotropic H
comes from the steering pass (see :mod:`hdrfuse.steering`).

The window weight divides by sigma squared: the Gaussian log-likelihood the
estimate maximizes puts the *variance* in the denominator. A compatibility
switch (``weight_mode="sigma"``) provides the plain-sigma weighting for
comparisons.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from . import _kernels
from .bayer import ColorChannel
from .images import HDRImage
from .radiometry import RadianceSamples, SampleIndex
from .validation import check_positions, check_positive, check_smoothing_matrix

# support truncation: the window is cut at 3 length-scales, where its value
# has fallen to exp(-9) of the center
SUPPORT_SIGMAS = 3.0


@dataclass(frozen=True)
class ReconstructionParams:
    """User-facing knobs of the isotropic reconstruction.

    ``scale`` is the variance-like window scale h (px^2); the base support
    radius is 3*sqrt(h). ``per_channel_scale`` applies h_G = h_RB / sqrt(2)
    to the green channel, which is sampled twice as densely.
    """

    order: int = 1
    scale: float = 0.7
    per_channel_scale: bool = True
    max_support_radius: Optional[float] = None
    cond_threshold: float = 1e8
    weight_mode: str = "variance"

    def __post_init__(self):
        if self.order not in (0, 1, 2):
            raise ValueError(f"order must be 0, 1 or 2, got {self.order}")
        check_positive("scale", self.scale)
        if self.weight_mode not in ("variance", "sigma"):
            raise ValueError(f"unknown weight_mode {self.weight_mode!r}")
        if self.max_support_radius is not None:
            if self.max_support_radius < math.sqrt(self.scale):
                raise ValueError("max_support_radius must be at least sqrt(scale)")

    def channel_scale(self, channel: ColorChannel) -> float:
        if self.per_channel_scale and channel == ColorChannel.G:
            return self.scale / math.sqrt(2.0)
        return self.scale

    def resolved_max_radius(self) -> float:
        if self.max_support_radius is not None:
            return float(self.max_support_radius)
        return 10.0 * math.sqrt(self.scale)


@dataclass(frozen=True)
class PolyFit:
    """Solved local fit: coefficient vector, its order, and the normal-matrix condition."""

    coefficients: np.ndarray
    order: int
    condition: float

    @property
    def value(self) -> float:
        return float(self.coefficients[0])

    @property
    def gradient(self) -> Optional[np.ndarray]:
        return self.coefficients[1:3] if self.order >= 1 else None


class Neighborhood(NamedTuple):
    positions: np.ndarray  # (k, 2)
    values: np.ndarray     # (k,)
    sigmas: np.ndarray     # (k,)


def n_coefficients(order: int) -> int:
    return (order + 1) * (order + 2) // 2


def basis_row(delta, order: int) -> np.ndarray:
    """Polynomial basis evaluated at offset dX = (dx1, dx2).

    Order 0: [1]; order 1 appends the offsets; order 2 appends the
    lexicographic lower triangle of the offset outer product
    [dx1^2, dx1*dx2, dx2^2].
    """
    if order not in (0, 1, 2):
        raise ValueError(f"order must be 0, 1 or 2, got {order}")
    dx, dy = float(delta[0]), float(delta[1])
    if order == 0:
        return np.array([1.0])
    if order == 1:
        return np.array([1.0, dx, dy])
    return np.array([1.0, dx, dy, dx * dx, dx * dy, dy * dy])


def window_weight(delta, H) -> float:
    """Gaussian window exp(-dX^T H^{-1} dX) / (2 pi det H) for SPD 2x2 H."""
    H = check_smoothing_matrix(H)
    dx, dy = float(delta[0]), float(delta[1])
    det = H[0, 0] * H[1, 1] - H[0, 1] * H[1, 0]
    q = (H[1, 1] * dx * dx - 2.0 * H[0, 1] * dx * dy + H[0, 0] * dy * dy) / det
    return math.exp(-q) / (2.0 * math.pi * det)


def isotropic_smoothing(scale: float) -> np.ndarray:
    return np.array([[scale, 0.0], [0.0, scale]])


def gather(samples: RadianceSamples, center, radius: float, channel: ColorChannel) -> Neighborhood:
    """All samples of ``channel`` within Euclidean ``radius`` of ``center``.

    Iterates the spatial index in the same cell order as the compiled kernel
    so downstream accumulations agree to rounding.
    """
    idx = samples.index(channel)
    cx, cy = float(center[0]), float(center[1])
    if radius < 0:
        raise ValueError("radius must be non-negative")
    out = []
    cx_lo = max(int(math.floor(cx - radius)) - idx.x0, 0)
    cx_hi = min(int(math.floor(cx + radius)) - idx.x0, idx.nx - 1)
    cy_lo = max(int(math.floor(cy - radius)) - idx.y0, 0)
    cy_hi = min(int(math.floor(cy + radius)) - idx.y0, idx.ny - 1)
    r2 = radius * radius
    for gy in range(cy_lo, cy_hi + 1):
        for gx in range(cx_lo, cx_hi + 1):
            cell = gy * idx.nx + gx
            for k in range(idx.cell_start[cell], idx.cell_start[cell + 1]):
                dx = idx.x[k] - cx
                dy = idx.y[k] - cy
                if dx * dx + dy * dy <= r2:
                    out.append(k)
    if not out:
        return Neighborhood(np.empty((0, 2)), np.empty(0), np.empty(0))
    sel = np.array(out, dtype=np.int64)
    return Neighborhood(
        np.column_stack([idx.x[sel], idx.y[sel]]),
        idx.values[sel].copy(),
        np.sqrt(idx.variances[sel]),
    )


def wls_fit(
    neighborhood: Neighborhood,
    center,
    order: int,
    H,
    cond_threshold: float = 1e8,
    weight_mode: str = "variance",
) -> Optional[PolyFit]:
    """Weighted least-squares polynomial fit; None signals rank deficiency.

    Reference implementation used by tests and single-point queries; the
    frame-level path runs the compiled equivalent in :mod:`hdrfuse._kernels`.
    """
    H = check_smoothing_matrix(H)
    k = len(neighborhood.values)
    p = n_coefficients(order)
    if k == 0:
        raise ValueError("neighborhood is empty")
    if k < p:
        return None
    center = np.asarray(center, dtype=np.float64)
    deltas = neighborhood.positions - center[None, :]
    Hinv = np.linalg.inv(H)
    q = np.einsum("ki,ij,kj->k", deltas, Hinv, deltas)
    det = H[0, 0] * H[1, 1] - H[0, 1] * H[1, 0]
    win = np.exp(-q) / (2.0 * math.pi * det)
    denom = neighborhood.sigmas**2 if weight_mode == "variance" else neighborhood.sigmas
    w = win / denom
    Phi = np.stack([basis_row(d, order) for d in deltas])
    A = (Phi * w[:, None]).T @ Phi
    rhs = (Phi * w[:, None]).T @ neighborhood.values
    eig = np.linalg.eigvalsh(A)
    if eig[0] <= 0:
        return None
    condition = float(eig[-1] / eig[0])
    if condition > cond_threshold:
        return None
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        return None
    coef = np.linalg.solve(L.T, np.linalg.solve(L, rhs))
    return PolyFit(coefficients=coef, order=order, condition=condition)


def _grid_coordinates(out_size, ref_size):
    """Reference-frame coordinates of the output pixel centers.

    When output and reference sizes match, centers sit on the integer
    lattice; otherwise they are spread uniformly over the reference extent
    (supersampling or decimation of the virtual sensor).
    """
    out_w, out_h = out_size
    ref_w, ref_h = ref_size
    xs = (np.arange(out_w) + 0.5) * (ref_w / out_w) - 0.5
    ys = (np.arange(out_h) + 0.5) * (ref_h / out_h) - 0.5
    return xs, ys


class LocalPolynomialRegressor(BaseEstimator, RegressorMixin):
    """Heteroscedastic local polynomial regression over scattered 2-D samples.

    sklearn-style estimator: ``fit(X, y, sigma=...)`` ingests sample
    positions (n, 2), values and per-sample standard deviations and builds a
    spatial index; ``predict(X)`` evaluates the adaptive local fit at query
    positions. ``smoothing`` overrides the default isotropic window with
    per-query SPD matrices (used by the steered second pass).
    """

    def __init__(
        self,
        order: int = 1,
        scale: float = 0.7,
        max_radius: Optional[float] = None,
        cond_threshold: float = 1e8,
        weight_mode: str = "variance",
    ):
        self.order = order
        self.scale = scale
        self.max_radius = max_radius
        self.cond_threshold = cond_threshold
        self.weight_mode = weight_mode

    def fit(self, X, y, sigma=None):
        X = check_positions(X)
        y = np.asarray(y, dtype=np.float64).ravel()
        if len(y) != len(X):
            raise ValueError(f"X has {len(X)} rows but y has {len(y)} values")
        if sigma is None:
            sigma = np.ones_like(y)
        else:
            sigma = np.broadcast_to(np.asarray(sigma, dtype=np.float64), y.shape).copy()
        if np.any(sigma <= 0):
            raise ValueError("sigma must be positive")
        samples = RadianceSamples(
            positions=X,
            channels=np.zeros(len(y)),
            values=y,
            sigmas=sigma,
            sensor_ids=np.zeros(len(y)),
        )
        self.index_ = samples.index(ColorChannel.R)
        self.n_samples_ = len(y)
        return self

    def predict(self, X, return_gradients: bool = False, smoothing=None):
        if not hasattr(self, "index_"):
            raise RuntimeError("regressor is not fitted")
        X = check_positions(X)
        steering = None
        if smoothing is not None:
            steering = _smoothing_to_kernel_inputs(smoothing, len(X))
        value, gx, gy = _evaluate_index(
            self.index_,
            X[:, 0],
            X[:, 1],
            order=self.order,
            scale=self.scale,
            max_radius=self.max_radius if self.max_radius is not None else 10.0 * math.sqrt(self.scale),
            cond_threshold=self.cond_threshold,
            weight_mode=self.weight_mode,
            steering=steering,
        )
        if return_gradients:
            return value, np.column_stack([gx, gy])
        return value


def _smoothing_to_kernel_inputs(smoothing, n_queries: int):
    """Per-query SPD smoothing matrices -> (Hinv entries, base radii) arrays.

    Accepts a single 2x2 matrix (broadcast) or an (n, 2, 2) stack; the base
    support radius is 3 times the square root of each matrix's largest
    eigenvalue.
    """
    H = np.asarray(smoothing, dtype=np.float64)
    if H.shape == (2, 2):
        H = np.broadcast_to(H, (n_queries, 2, 2))
    if H.shape != (n_queries, 2, 2):
        raise ValueError(
            f"smoothing must be 2x2 or ({n_queries}, 2, 2), got shape {H.shape}"
        )
    a, b, d = H[:, 0, 0], H[:, 0, 1], H[:, 1, 1]
    if np.max(np.abs(b - H[:, 1, 0])) > 1e-12:
        raise ValueError("smoothing matrices must be symmetric")
    det = a * d - b * b
    if np.any(det <= 0) or np.any(a <= 0):
        raise ValueError("smoothing matrices must be positive definite")
    mean = 0.5 * (a + d)
    disc = np.hypot(0.5 * (a - d), b)
    radius = SUPPORT_SIGMAS * np.sqrt(mean + disc)
    return (d / det, -b / det, a / det, radius)


def _evaluate_index(
    index: SampleIndex,
    qx,
    qy,
    order: int,
    scale: float,
    max_radius: float,
    cond_threshold: float,
    weight_mode: str = "variance",
    steering=None,
):
    """Run the compiled adaptive fit for query arrays against one sample index.

    ``steering`` is None for a purely isotropic pass, or a tuple of per-query
    arrays (hinv11, hinv12, hinv22, radius0) describing the primary
    anisotropic windows; the isotropic window always serves as the fallback
    phase.
    """
    qx = np.ascontiguousarray(qx, dtype=np.float64)
    qy = np.ascontiguousarray(qy, dtype=np.float64)
    m = len(qx)
    out_val = np.empty(m)
    out_gx = np.empty(m)
    out_gy = np.empty(m)
    if len(index) == 0:
        out_val.fill(np.nan)
        out_gx.fill(np.nan)
        out_gy.fill(np.nan)
        return out_val, out_gx, out_gy
    iso = np.full(m, 1.0 / scale)
    zeros = np.zeros(m)
    iso_r0 = np.full(m, SUPPORT_SIGMAS * math.sqrt(scale))
    if steering is None:
        an11, an12, an22, an_r0 = iso, zeros, iso, iso_r0
        two_phase = False
    else:
        an11, an12, an22, an_r0 = steering
        two_phase = True
    n_chunks = (m + 1023) // 1024
    stride = 8
    chunk_map = np.concatenate(
        [np.arange(r, n_chunks, stride) for r in range(stride)]
    ).astype(np.int64)
    _kernels.lpa_evaluate(
        qx, qy,
        np.ascontiguousarray(an11), np.ascontiguousarray(an12),
        np.ascontiguousarray(an22), np.ascontiguousarray(an_r0),
        iso, zeros, iso, iso_r0,
        two_phase, order, float(max_radius), float(cond_threshold),
        index.packed, weight_mode == "sigma",
        index.cell_start, index.x0, index.y0, index.nx, index.ny,
        chunk_map,
        out_val, out_gx, out_gy,
    )
    return out_val, out_gx, out_gy


def reconstruct_channel(
    samples: RadianceSamples,
    out_size: tuple[int, int],
    params: ReconstructionParams,
    channel: ColorChannel,
    ref_size: Optional[tuple[int, int]] = None,
    steering=None,
):
    """Reconstruct one channel plane (and gradient planes) on the output grid.

    Returns (value, grad_x, grad_y) arrays of shape (height, width). Pixels
    with no sample inside the maximum support are NaN.
    """
    out_w, out_h = out_size
    ref_size = ref_size or out_size
    xs, ys = _grid_coordinates(out_size, ref_size)
    qx, qy = np.meshgrid(xs, ys)
    index = samples.index(channel)
    val, gx, gy = _evaluate_index(
        index,
        qx.ravel(),
        qy.ravel(),
        order=params.order,
        scale=params.channel_scale(channel),
        max_radius=params.resolved_max_radius(),
        cond_threshold=params.cond_threshold,
        weight_mode=params.weight_mode,
        steering=steering,
    )
    return val.reshape(out_h, out_w), gx.reshape(out_h, out_w), gy.reshape(out_h, out_w)


def reconstruct_frame(
    samples: RadianceSamples,
    out_size: tuple[int, int],
    params: ReconstructionParams,
    ref_size: Optional[tuple[int, int]] = None,
    return_gradients: bool = False,
):
    """Isotropic LPA reconstruction of all three channels into an HDRImage.

    Final radiance planes are clamped at zero (the fit of noisy dark samples
    can dip marginally below); gradients are returned unclamped.
    """
    out_w, out_h = out_size
    planes = np.empty((out_h, out_w, 3), dtype=np.float32)
    grads = {}
    for channel in ColorChannel:
        val, gx, gy = reconstruct_channel(samples, out_size, params, channel, ref_size)
        planes[:, :, int(channel)] = np.maximum(val, 0.0).astype(np.float32)
        grads[channel] = (gx, gy)
    img = HDRImage(planes)
    if return_gradients:
        return img, grads
    return img
