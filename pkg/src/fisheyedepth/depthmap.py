"""Sparse depth maps: z-buffer rasterization, ROI crop, valid-min downsampling and 16-bit PGM I/O."""
from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels


@dataclass(frozen=True)
class SparseDepthMap:
    """Depth in meters on an ``(height, width)`` grid with an explicit valid mask.

    Invalid pixels always carry depth 0 so maps compare and serialize canonically.
    """

    depth: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        depth = np.asarray(self.depth, dtype=np.float64)
        valid = np.asarray(self.valid, dtype=bool)
        if depth.ndim != 2 or depth.shape != valid.shape:
            raise ValueError("depth and valid mask must be 2-d arrays of equal shape")
        if np.any(valid & ~(np.isfinite(depth) & (depth > 0))):
            raise ValueError("valid pixels need finite positive depth")
        depth = np.where(valid, depth, 0.0)
        object.__setattr__(self, "depth", depth)
        object.__setattr__(self, "valid", valid)

    @classmethod
    def empty(cls, width, height):
        return cls(np.zeros((height, width)), np.zeros((height, width), dtype=bool))

    @classmethod
    def from_dense(cls, depth):
        """Treat every finite positive value as valid."""
        depth = np.asarray(depth, dtype=np.float64)
        return cls(depth, np.isfinite(depth) & (depth > 0))

    @property
    def width(self):
        return self.depth.shape[1]

    @property
    def height(self):
        return self.depth.shape[0]

    @property
    def size(self):
        return (self.width, self.height)

    @property
    def n(self):
        return int(self.valid.sum())

    def __eq__(self, other):
        if not isinstance(other, SparseDepthMap):
            return NotImplemented
        return np.array_equal(self.valid, other.valid) and np.array_equal(self.depth, other.depth)


@dataclass(frozen=True)
class CropRegion:
    x: int
    y: int
    width: int
    height: int

    def check_inside(self, size):
        w, h = size
        if self.width <= 0 or self.height <= 0 or self.x < 0 or self.y < 0 \
                or self.x + self.width > w or self.y + self.height > h:
            raise ValueError(f"crop region {self} is not inside a {w}x{h} image")


def rasterize(pixels, ranges, size) -> SparseDepthMap:
    """Nearest-wins z-buffer of (col, row) pixels with their ranges."""
    width, height = size
    pixels = np.asarray(pixels, dtype=np.int64).reshape(-1, 2)
    ranges = np.asarray(ranges, dtype=np.float64).reshape(-1)
    if len(pixels) != len(ranges):
        raise ValueError("pixel and range counts differ")
    if np.any(~(ranges > 0)):
        raise ValueError("ranges must be positive")
    cols, rows = pixels[:, 0], pixels[:, 1]
    if np.any((cols < 0) | (cols >= width) | (rows < 0) | (rows >= height)):
        raise ValueError("pixel outside the image")
    buf = kernels.zbuffer_min(cols, rows, ranges, width, height)
    valid = np.isfinite(buf)
    return SparseDepthMap(np.where(valid, buf, 0.0), valid)


def auto_roi(maps, roi_size) -> CropRegion:
    """Window of ``roi_size`` with the most valid pixels summed over ``maps``.

    Ties resolve to the smallest origin, ordered by y then x.
    """
    maps = list(maps)
    if not maps:
        raise ValueError("auto_roi needs at least one depth map")
    rw, rh = roi_size
    counts = np.zeros(maps[0].valid.shape, dtype=np.int64)
    for m in maps:
        if m.valid.shape != counts.shape:
            raise ValueError("depth maps differ in size")
        counts += m.valid
    h, w = counts.shape
    if not (0 < rw <= w and 0 < rh <= h):
        raise ValueError("roi does not fit inside the maps")
    sat = np.zeros((h + 1, w + 1), dtype=np.int64)
    sat[1:, 1:] = counts.cumsum(0).cumsum(1)
    sums = sat[rh:, rw:] - sat[:-rh, rw:] - sat[rh:, :-rw] + sat[:-rh, :-rw]
    y, x = np.unravel_index(int(np.argmax(sums)), sums.shape)
    return CropRegion(int(x), int(y), int(rw), int(rh))


def crop(m: SparseDepthMap, roi: CropRegion) -> SparseDepthMap:
    roi.check_inside(m.size)
    sl = (slice(roi.y, roi.y + roi.height), slice(roi.x, roi.x + roi.width))
    return SparseDepthMap(m.depth[sl].copy(), m.valid[sl].copy())


def pad_to(m: SparseDepthMap, size) -> SparseDepthMap:
    """Grow a map to ``size`` with invalid pixels, centered (odd remainder goes right/bottom)."""
    w, h = size
    if w < m.width or h < m.height:
        raise ValueError(f"cannot pad a {m.width}x{m.height} map down to {w}x{h}")
    left, top = (w - m.width) // 2, (h - m.height) // 2
    depth = np.zeros((h, w))
    valid = np.zeros((h, w), dtype=bool)
    depth[top:top + m.height, left:left + m.width] = m.depth
    valid[top:top + m.height, left:left + m.width] = m.valid
    return SparseDepthMap(depth, valid)


def downsample(m: SparseDepthMap, factor: int, target=None) -> SparseDepthMap:
    """Block-wise valid-minimum pooling.

    An output pixel is valid iff its ``factor x factor`` source block holds a
    valid pixel; its value is the smallest valid depth in the block. Output size
    is ``floor(dim / factor)``; with ``target=(W, H)`` the source is first padded
    (see :func:`pad_to`) to ``(W*factor, H*factor)`` so the output matches exactly.
    """
    factor = int(factor)
    if factor < 1:
        raise ValueError("downsample factor must be >= 1")
    if target is not None:
        m = pad_to(m, (target[0] * factor, target[1] * factor))
    oh, ow = m.height // factor, m.width // factor
    d = np.where(m.valid, m.depth, np.inf)[: oh * factor, : ow * factor]
    pooled = d.reshape(oh, factor, ow, factor).min(axis=(1, 3))
    valid = np.isfinite(pooled)
    return SparseDepthMap(np.where(valid, pooled, 0.0), valid)


# -- files -------------------------------------------------------------------------------------

DEFAULT_SCALE = 1.0 / 256.0


def encode_pgm16(m: SparseDepthMap, scale: float = DEFAULT_SCALE) -> bytes:
    """Binary 16-bit (big-endian) PGM; count = round(depth / scale), 0 marks invalid."""
    if not scale > 0:
        raise ValueError("scale must be positive")
    counts = np.floor(m.depth / scale + 0.5)
    if np.any(counts[m.valid] > 65535):
        raise ValueError(f"depth exceeds the 16-bit range at scale {scale!r}")
    if np.any(counts[m.valid] < 1):
        raise ValueError(f"valid depth below the quantization step at scale {scale!r}")
    data = np.where(m.valid, counts, 0).astype(">u2")
    header = f"P5\n# scale {scale!r}\n{m.width} {m.height}\n65535\n".encode("ascii")
    return header + data.tobytes()


_TOKEN = re.compile(rb"\s*(#[^\n]*\n\s*)*([^\s#]+)")


def decode_pgm16(data: bytes, scale: float | None = None) -> SparseDepthMap:
    """Inverse of :func:`encode_pgm16`; the scale comes from the header comment unless given."""
    if data[:2] != b"P5":
        raise ValueError("not a binary PGM (P5) file")
    pos = 2
    fields = []
    header_scale = None
    while len(fields) < 3:
        mt = _TOKEN.match(data, pos)
        if mt is None:
            raise ValueError("truncated PGM header")
        for comment in re.findall(rb"#\s*scale\s+(\S+)", data[pos:mt.end()]):
            header_scale = float(comment)
        fields.append(int(mt.group(2)))
        pos = mt.end()
    width, height, maxval = fields
    if maxval != 65535:
        raise ValueError("expected a 16-bit PGM (maxval 65535)")
    pos += 1  # single whitespace after maxval
    counts = np.frombuffer(data, dtype=">u2", count=width * height, offset=pos).reshape(height, width)
    if scale is None:
        scale = DEFAULT_SCALE if header_scale is None else header_scale
    valid = counts > 0
    return SparseDepthMap(counts.astype(np.float64) * scale, valid)


def save_pgm16(m: SparseDepthMap, path, scale: float = DEFAULT_SCALE):
    Path(path).write_bytes(encode_pgm16(m, scale))


def load_pgm16(path, scale: float | None = None) -> SparseDepthMap:
    return decode_pgm16(Path(path).read_bytes(), scale)


def write_sidecar(path, **provenance):
    """Structured-text provenance (roi, factor, padding, scale, source size) next to a depth map."""
    Path(path).write_text(json.dumps(provenance, indent=2, sort_keys=True) + "\n")


def write_valid_csv(m: SparseDepthMap, path):
    """Valid pixels as ``x,y,depth`` rows (row-major order)."""
    rows, cols = np.nonzero(m.valid)
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(("x", "y", "depth"))
        for r, c in zip(rows, cols):
            w.writerow((int(c), int(r), repr(float(m.depth[r, c]))))
