"""Minimal Netpbm reader (P2, P3, P5, P6) producing normalized luminance."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadMagic, BadMaxval, EmptyImage, PnmError, TruncatedData

# Rec. 709 luma weights
LUMA_WEIGHTS = (0.2126, 0.7152, 0.0722)

_WHITESPACE = b" \t\n\r\v\f"


@dataclass(frozen=True, eq=False)
class GrayscaleImage:
    width: int
    height: int
    samples: np.ndarray  # row-major float64 in [0, 1]

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if self.width < 0 or self.height < 0 or samples.size != self.width * self.height:
            raise ValueError(
                f"{self.width}x{self.height} image needs {self.width * self.height} samples, "
                f"got {samples.size}")
        if samples.size and (samples.min() < 0.0 or samples.max() > 1.0):
            raise ValueError("samples must lie in [0, 1]")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    def __eq__(self, other):
        return (isinstance(other, GrayscaleImage) and self.width == other.width
                and self.height == other.height
                and np.array_equal(self.samples, other.samples))

    @property
    def mean(self) -> float:
        if self.samples.size == 0:
            raise EmptyImage("image has no pixels")
        return float(np.mean(self.samples))


class _Reader:
    def __init__(self, data: bytes, pos: int = 0):
        self.data = data
        self.pos = pos

    def token(self) -> bytes:
        data, n = self.data, len(self.data)
        while self.pos < n:
            c = data[self.pos:self.pos + 1]
            if c in _WHITESPACE:
                self.pos += 1
            elif c == b"#":
                while self.pos < n and data[self.pos:self.pos + 1] not in b"\r\n":
                    self.pos += 1
            else:
                break
        start = self.pos
        while self.pos < n and data[self.pos:self.pos + 1] not in _WHITESPACE + b"#":
            self.pos += 1
        if start == self.pos:
            raise TruncatedData("unexpected end of data")
        return data[start:self.pos]

    def integer(self, what: str) -> int:
        tok = self.token()
        if not tok.isdigit():
            raise PnmError(f"bad {what}: {tok!r}")
        return int(tok)


def decode_pnm(data: bytes) -> GrayscaleImage:
    """Decode a PGM/PPM byte string into normalized luminance samples."""
    magic = bytes(data[:2])
    if magic not in (b"P2", b"P3", b"P5", b"P6"):
        raise BadMagic(f"unsupported magic number {magic!r}")
    channels = 3 if magic in (b"P3", b"P6") else 1

    rd = _Reader(bytes(data), 2)
    width = rd.integer("width")
    height = rd.integer("height")
    maxval = rd.integer("maxval")
    if not 0 < maxval <= 65535:
        raise BadMaxval(f"maxval must be in 1..65535, got {maxval}")
    count = width * height * channels

    if magic in (b"P2", b"P3"):
        raw = np.empty(count, dtype=np.int64)
        for i in range(count):
            raw[i] = rd.integer("sample")
    else:
        if rd.pos >= len(rd.data) or rd.data[rd.pos:rd.pos + 1] not in _WHITESPACE:
            raise TruncatedData("missing whitespace before raster")
        start = rd.pos + 1
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        nbytes = count * dtype.itemsize
        if len(rd.data) - start < nbytes:
            raise TruncatedData(f"raster needs {nbytes} bytes, got {len(rd.data) - start}")
        raw = np.frombuffer(rd.data, dtype=dtype, count=count, offset=start).astype(np.int64)

    if raw.size and raw.max() > maxval:
        raise BadMaxval(f"sample value {int(raw.max())} exceeds maxval {maxval}")

    scaled = raw.astype(np.float64) / maxval
    if channels == 3:
        rgb = scaled.reshape(-1, 3)
        lum = rgb @ np.asarray(LUMA_WEIGHTS)
        # weights sum to 1 but the dot product can land an ulp outside [0, 1]
        scaled = np.clip(lum, 0.0, 1.0)
        flat = (rgb[:, 0] == rgb[:, 1]) & (rgb[:, 1] == rgb[:, 2])
        scaled[flat] = rgb[flat, 0]
    return GrayscaleImage(width, height, scaled)


def encode_pgm(img: GrayscaleImage, maxval: int = 255, binary: bool = True) -> bytes:
    """Encode as P5 (or P2) after quantizing samples to ``maxval``."""
    q = np.rint(img.samples * maxval).astype(np.int64)
    header = f"{'P5' if binary else 'P2'}\n{img.width} {img.height}\n{maxval}\n".encode()
    if binary:
        dtype = ">u2" if maxval > 255 else "u1"
        return header + q.astype(dtype).tobytes()
    rows = [" ".join(str(v) for v in q[r * img.width:(r + 1) * img.width])
            for r in range(img.height)]
    return header + ("\n".join(rows) + "\n").encode()


def read_pnm(path) -> GrayscaleImage:
    with open(path, "rb") as fh:
        return decode_pnm(fh.read())
