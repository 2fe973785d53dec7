"""Image containers shared by the whole pipeline.

All containers are treated as immutable once constructed: operations never
write into an input frame, so instances can be shared freely across
parallel workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bayer import BayerPattern
from .validation import ShapeMismatchError


@dataclass(frozen=True)
class CFAImage:
    """One sensor's raw mosaiced frame: integer digital values plus Bayer phase.

    ``data`` is a (height, width) unsigned-integer array in row-major order;
    every value must fit in ``bit_depth`` bits.
    """

    data: np.ndarray
    bit_depth: int
    pattern: BayerPattern

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2:
            raise ValueError(f"CFA data must be 2-D, got shape {data.shape}")
        if not np.issubdtype(data.dtype, np.integer):
            raise ValueError(f"CFA data must be integer, got dtype {data.dtype}")
        if not 8 <= self.bit_depth <= 16:
            raise ValueError(f"bit_depth must be in [8, 16], got {self.bit_depth}")
        data = np.ascontiguousarray(data.astype(np.uint16, copy=False))
        if data.size and int(data.max()) >= (1 << self.bit_depth):
            raise ValueError(
                f"pixel value {int(data.max())} exceeds {self.bit_depth}-bit range"
            )
        object.__setattr__(self, "data", data)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class FloatFrame:
    """Single real-valued plane (bias in DV, variance in DV^2, unitless gain field...)."""

    data: np.ndarray

    def __post_init__(self):
        data = np.ascontiguousarray(np.asarray(self.data, dtype=np.float64))
        if data.ndim != 2:
            raise ValueError(f"FloatFrame data must be 2-D, got shape {data.shape}")
        object.__setattr__(self, "data", data)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @classmethod
    def full(cls, width: int, height: int, value: float) -> "FloatFrame":
        return cls(np.full((height, width), float(value)))


@dataclass(frozen=True)
class HDRImage:
    """Reconstructed RGB radiance frame on the virtual output grid.

    ``data`` is (height, width, 3), electrons/second. Finite values are
    non-negative; NaN marks output pixels with no usable observation (every
    sensor saturated or defective there).
    """

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3 or data.shape[2] != 3:
            raise ValueError(f"HDR data must be (h, w, 3), got shape {data.shape}")
        if not np.issubdtype(data.dtype, np.floating):
            data = data.astype(np.float32)
        data = np.ascontiguousarray(data)
        finite = data[np.isfinite(data)]
        if finite.size and finite.min() < 0:
            raise ValueError("HDR radiance values must be non-negative (NaN allowed)")
        object.__setattr__(self, "data", data)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    def plane(self, channel: int) -> np.ndarray:
        return self.data[:, :, int(channel)]

    def check_matches(self, other: "HDRImage") -> None:
        if self.data.shape != other.data.shape:
            raise ShapeMismatchError(
                f"dimension mismatch: {self.data.shape} vs {other.data.shape}"
            )
