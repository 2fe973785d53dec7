"""Bit-exact raster I/O: 16-bit binary PGM for raw CFA frames, PFM for reals.

PGM (``P5``): header tokens separated by whitespace, ``#`` comments allowed,
sample payload big-endian two-byte words (Netpbm convention, maxval in
[256, 65535]). PFM (``PF``/``Pf``): three header lines, a scale line whose
sign encodes endianness (we always write -1.0, little-endian), rows stored
bottom-up on disk and normalized to top-down in memory.
"""

from __future__ import annotations

import os
from typing import Union

import numpy as np

from .bayer import BayerPattern
from .images import CFAImage, FloatFrame, HDRImage


class PnmParseError(ValueError):
    """Malformed PGM/PFM input; carries the byte offset where parsing failed."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class _Tokenizer:
    """Whitespace/comment-aware scanner over a header byte buffer."""

    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def _skip_space(self, allow_comments: bool) -> None:
        while self.pos < len(self.buf):
            c = self.buf[self.pos : self.pos + 1]
            if c.isspace():
                self.pos += 1
            elif allow_comments and c == b"#":
                nl = self.buf.find(b"\n", self.pos)
                self.pos = len(self.buf) if nl < 0 else nl + 1
            else:
                return

    def token(self, what: str, allow_comments: bool = True) -> bytes:
        self._skip_space(allow_comments)
        start = self.pos
        while self.pos < len(self.buf) and not self.buf[self.pos : self.pos + 1].isspace():
            self.pos += 1
        if self.pos == start:
            raise PnmParseError(f"unexpected end of header while reading {what}", start)
        return self.buf[start : self.pos]

    def integer(self, what: str) -> int:
        start_guess = self.pos
        tok = self.token(what)
        try:
            return int(tok)
        except ValueError:
            raise PnmParseError(f"invalid {what} {tok!r}", start_guess) from None


def read_pgm16(path: Union[str, os.PathLike], pattern: BayerPattern = BayerPattern.RGGB) -> CFAImage:
    """Read a binary 16-bit P5 file.

    The Bayer phase is not stored in PGM; it is metadata carried by the rig
    configuration and passed in by the caller (default RGGB).
    """
    with open(path, "rb") as f:
        buf = f.read()
    tok = _Tokenizer(buf)
    magic = tok.token("magic")
    if magic != b"P5":
        raise PnmParseError(f"unsupported magic {magic!r}, expected P5", 0)
    width = tok.integer("width")
    height = tok.integer("height")
    maxval = tok.integer("maxval")
    if width <= 0 or height <= 0:
        raise PnmParseError(f"invalid dimensions {width}x{height}", tok.pos)
    if maxval <= 255:
        raise PnmParseError(
            f"maxval {maxval} is an 8-bit PGM; this reader handles 16-bit files only",
            tok.pos,
        )
    if maxval > 65535:
        raise PnmParseError(f"maxval {maxval} out of range", tok.pos)
    # exactly one whitespace byte separates the header from the payload
    if tok.pos >= len(buf) or not buf[tok.pos : tok.pos + 1].isspace():
        raise PnmParseError("missing whitespace after maxval", tok.pos)
    start = tok.pos + 1
    need = width * height * 2
    payload = buf[start : start + need]
    if len(payload) < need:
        raise PnmParseError(
            f"truncated payload: expected {need} bytes, file ends after {len(payload)}",
            start + len(payload),
        )
    data = np.frombuffer(payload, dtype=">u2").reshape(height, width).astype(np.uint16)
    if data.size and int(data.max()) > maxval:
        raise PnmParseError(f"sample value {int(data.max())} exceeds maxval {maxval}", start)
    return CFAImage(data=data, bit_depth=max(9, maxval.bit_length()), pattern=pattern)


def write_pgm16(img: CFAImage, path: Union[str, os.PathLike]) -> None:
    """Write ``img`` as binary P5 with maxval ``2**bit_depth - 1``."""
    maxval = (1 << img.bit_depth) - 1
    if maxval <= 255:
        raise ValueError(
            f"bit depth {img.bit_depth} gives maxval {maxval} <= 255; "
            "only 16-bit (two-byte) PGM output is supported"
        )
    header = f"P5\n{img.width} {img.height}\n{maxval}\n".encode("ascii")
    with open(path, "wb") as f:
        f.write(header)
        f.write(img.data.astype(">u2").tobytes())


def read_pfm(path: Union[str, os.PathLike]) -> Union[HDRImage, FloatFrame]:
    """Read a PFM file: ``PF`` yields an HDRImage, ``Pf`` a FloatFrame."""
    with open(path, "rb") as f:
        buf = f.read()
    tok = _Tokenizer(buf)
    magic = tok.token("magic")
    if magic not in (b"PF", b"Pf"):
        raise PnmParseError(f"unsupported magic {magic!r}, expected PF or Pf", 0)
    channels = 3 if magic == b"PF" else 1
    width = tok.integer("width")
    height = tok.integer("height")
    if width <= 0 or height <= 0:
        raise PnmParseError(f"invalid dimensions {width}x{height}", tok.pos)
    scale_tok = tok.token("scale")
    try:
        scale = float(scale_tok)
    except ValueError:
        raise PnmParseError(f"invalid scale {scale_tok!r}", tok.pos) from None
    if not np.isfinite(scale) or scale == 0.0:
        raise PnmParseError(f"invalid scale {scale}", tok.pos)
    if tok.pos >= len(buf) or not buf[tok.pos : tok.pos + 1].isspace():
        raise PnmParseError("missing whitespace after scale", tok.pos)
    start = tok.pos + 1
    need = width * height * channels * 4
    payload = buf[start : start + need]
    if len(payload) < need:
        raise PnmParseError(
            f"truncated payload: expected {need} bytes, file ends after {len(payload)}",
            start + len(payload),
        )
    dtype = "<f4" if scale < 0 else ">f4"
    data = np.frombuffer(payload, dtype=dtype).astype(np.float32)
    data = data.reshape(height, width, channels)
    data = data[::-1]  # disk rows are bottom-up
    if channels == 1:
        return FloatFrame(data[:, :, 0].astype(np.float64))
    return HDRImage(np.ascontiguousarray(data))


def write_pfm(img: Union[HDRImage, FloatFrame, np.ndarray], path: Union[str, os.PathLike]) -> None:
    """Write little-endian PFM (scale -1.0). 2-D input becomes ``Pf``, (h, w, 3) ``PF``."""
    if isinstance(img, HDRImage):
        data = img.data
    elif isinstance(img, FloatFrame):
        data = img.data
    else:
        data = np.asarray(img)
    if data.ndim == 2:
        magic = b"Pf"
    elif data.ndim == 3 and data.shape[2] == 3:
        magic = b"PF"
    else:
        raise ValueError(f"cannot write array of shape {data.shape} as PFM")
    height, width = data.shape[:2]
    header = magic + f"\n{width} {height}\n-1.0\n".encode("ascii")
    with open(path, "wb") as f:
        f.write(header)
        f.write(np.ascontiguousarray(data[::-1], dtype="<f4").tobytes())
