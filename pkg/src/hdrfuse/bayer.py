"""Bayer color filter array addressing.

Each sensor pixel measures a single color channel according to a 2x2
periodic mosaic. The four possible phases are named by the colors of the
top-left 2x2 block in row-major order (RGGB, BGGR, GRBG, GBRG). Green is
sampled on a quincunx grid, red and blue on rectangular grids at half the
native resolution.
"""

from __future__ import annotations

import enum

import numpy as np


class ColorChannel(enum.IntEnum):
    R = 0
    G = 1
    B = 2


# phase -> 2x2 tile of channels, indexed [y % 2][x % 2]
_TILES = {
    "RGGB": ((ColorChannel.R, ColorChannel.G), (ColorChannel.G, ColorChannel.B)),
    "BGGR": ((ColorChannel.B, ColorChannel.G), (ColorChannel.G, ColorChannel.R)),
    "GRBG": ((ColorChannel.G, ColorChannel.R), (ColorChannel.B, ColorChannel.G)),
    "GBRG": ((ColorChannel.G, ColorChannel.B), (ColorChannel.R, ColorChannel.G)),
}


class BayerPattern(enum.Enum):
    RGGB = "RGGB"
    BGGR = "BGGR"
    GRBG = "GRBG"
    GBRG = "GBRG"

    @property
    def tile(self) -> tuple[tuple[ColorChannel, ColorChannel], ...]:
        return _TILES[self.value]

    def channel_at(self, x: int, y: int) -> ColorChannel:
        """Channel sampled at pixel column ``x``, row ``y`` (both >= 0)."""
        if x < 0 or y < 0:
            raise ValueError("pixel coordinates must be non-negative")
        return self.tile[y % 2][x % 2]


def channel_at(pattern: BayerPattern, x: int, y: int) -> ColorChannel:
    """Functional alias for :meth:`BayerPattern.channel_at`."""
    return pattern.channel_at(x, y)


def channel_map(pattern: BayerPattern, width: int, height: int) -> np.ndarray:
    """(height, width) uint8 array of ColorChannel values for a full frame."""
    tile = np.array(pattern.tile, dtype=np.uint8)
    ys = np.arange(height) % 2
    xs = np.arange(width) % 2
    return tile[np.ix_(ys, xs)]


def channel_masks(pattern: BayerPattern, width: int, height: int) -> dict[ColorChannel, np.ndarray]:
    """Boolean site masks per channel; the three masks tile the frame."""
    cmap = channel_map(pattern, width, height)
    return {c: cmap == int(c) for c in ColorChannel}
