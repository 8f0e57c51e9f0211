"""Distance-layer occlusion filter.

Projected LIDAR points are binned into the nearest of ``I`` range layers. Each
layer's pixel occupancy is dilated with a square structuring element, and a
point is dropped when a strictly nearer layer covers its pixel and the point
lies more than ``margin`` behind that layer.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .geometry import project_points


@dataclass(frozen=True)
class LayerConfig:
    distances: tuple = field(default_factory=lambda: tuple(np.geomspace(1.0, 60.0, 12)))
    dilation_radius: int = 2
    margin: float = 0.5

    def __post_init__(self):
        d = tuple(float(v) for v in self.distances)
        object.__setattr__(self, "distances", d)
        if len(d) < 1:
            raise ValueError("at least one layer is required")
        if any(b <= a for a, b in zip(d, d[1:])):
            raise ValueError("layer distances must be strictly increasing")
        if self.dilation_radius < 0 or int(self.dilation_radius) != self.dilation_radius:
            raise ValueError("dilation radius must be a non-negative integer")
        if self.margin < 0:
            raise ValueError("margin must be >= 0")

    @classmethod
    def log_spaced(cls, count=12, near=1.0, far=60.0, **kw):
        return cls(tuple(np.geomspace(near, far, count)), **kw)

    @property
    def count(self):
        return len(self.distances)

    def to_dict(self):
        return {"distances": list(self.distances), "dilation_radius": self.dilation_radius,
                "margin": self.margin}

    @classmethod
    def from_dict(cls, d):
        if "distances" in d and d["distances"] is not None:
            return cls(tuple(d["distances"]), int(d.get("dilation_radius", 2)), float(d.get("margin", 0.5)))
        return cls.log_spaced(int(d.get("count", 12)), float(d.get("near", 1.0)), float(d.get("far", 60.0)),
                              dilation_radius=int(d.get("dilation_radius", 2)),
                              margin=float(d.get("margin", 0.5)))


@dataclass(frozen=True)
class ProjectedPoints:
    """Points that landed in the image: source point, integer pixel (col, row) and range."""

    points: np.ndarray
    pixels: np.ndarray
    ranges: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "points", np.asarray(self.points, dtype=np.float64).reshape(-1, 3))
        object.__setattr__(self, "pixels", np.asarray(self.pixels, dtype=np.int64).reshape(-1, 2))
        object.__setattr__(self, "ranges", np.asarray(self.ranges, dtype=np.float64).reshape(-1))
        if not len(self.points) == len(self.pixels) == len(self.ranges):
            raise ValueError("points, pixels and ranges must have equal length")

    def __len__(self):
        return len(self.ranges)

    def subset(self, mask):
        return ProjectedPoints(self.points[mask], self.pixels[mask], self.ranges[mask])

    @classmethod
    def from_camera_points(cls, pts_cam, intrinsics):
        """Project camera-frame points, keeping the in-view ones with their floor pixel."""
        pts_cam = np.asarray(pts_cam, dtype=np.float64).reshape(-1, 3)
        pix, rng, ok = project_points(pts_cam, intrinsics)
        return cls(pts_cam[ok], np.floor(pix[ok]).astype(np.int64), rng[ok])

    @classmethod
    def from_ranges(cls, pixels, ranges):
        ranges = np.asarray(ranges, dtype=np.float64).reshape(-1)
        return cls(np.zeros((len(ranges), 3)), pixels, ranges)


@dataclass(frozen=True)
class LayerStack:
    raw: np.ndarray  # (I, H, W) bool
    dilated: np.ndarray  # (I, H, W) bool
    config: LayerConfig


def assign_layers(ranges, distances) -> np.ndarray:
    """Index of the nearest layer per range; exact ties go to the nearer layer."""
    ranges = np.asarray(ranges, dtype=np.float64).reshape(-1)
    d = np.asarray(distances, dtype=np.float64)
    if len(ranges) == 0:
        return np.zeros(0, dtype=np.int64)
    return np.argmin(np.abs(ranges[:, None] - d[None, :]), axis=1).astype(np.int64)


def dilate_layer(grid, radius: int) -> np.ndarray:
    """Binary dilation with a ``(2r+1) x (2r+1)`` square (Chebyshev radius ``r``)."""
    return kernels.dilate_square(grid, radius)


def build_layer_stack(pts: ProjectedPoints, cfg: LayerConfig, image_size) -> LayerStack:
    width, height = image_size
    cols, rows = pts.pixels[:, 0], pts.pixels[:, 1]
    if np.any((cols < 0) | (cols >= width) | (rows < 0) | (rows >= height)):
        raise ValueError("projected pixel outside the image")
    layers = assign_layers(pts.ranges, cfg.distances)
    raw = np.zeros((cfg.count, height, width), dtype=bool)
    raw[layers, rows, cols] = True
    dilated = np.empty_like(raw)
    for i in range(cfg.count):
        dilated[i] = dilate_layer(raw[i], cfg.dilation_radius) if raw[i].any() else False
    return LayerStack(raw, dilated, cfg)


def filter_occluded(pts: ProjectedPoints, stack: LayerStack):
    """Split points into kept ones and a removed mask (input order preserved)."""
    cfg = stack.config
    layers = assign_layers(pts.ranges, cfg.distances)
    removed = kernels.occluded_mask(
        pts.pixels[:, 0], pts.pixels[:, 1], pts.ranges, layers, stack.dilated, cfg.distances, cfg.margin
    )
    return pts.subset(~removed), removed


def remove_occluded(pts: ProjectedPoints, cfg: LayerConfig, image_size):
    """Build the layer stack and filter in one go."""
    return filter_occluded(pts, build_layer_stack(pts, cfg, image_size))


def write_layer_images(stack: LayerStack, directory, prefix="layer"):
    """Debug dump: one 8-bit PGM per layer (raw=255, dilation-only=128, empty=0)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i in range(stack.config.count):
        img = np.where(stack.raw[i], 255, np.where(stack.dilated[i], 128, 0)).astype(np.uint8)
        h, w = img.shape
        path = directory / f"{prefix}_{i:02d}.pgm"
        path.write_bytes(f"P5\n# range {stack.config.distances[i]:.4f} m\n{w} {h}\n255\n".encode() + img.tobytes())
        paths.append(path)
    return paths


PROJECTED_COLUMNS = ("col", "row", "range", "x", "y", "z")


def write_projected_csv(pts: ProjectedPoints, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(PROJECTED_COLUMNS)
        for (c, r), d, p in zip(pts.pixels, pts.ranges, pts.points):
            w.writerow([int(c), int(r), repr(float(d)), repr(float(p[0])), repr(float(p[1])), repr(float(p[2]))])


def read_projected_csv(path) -> ProjectedPoints:
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if tuple(header) != PROJECTED_COLUMNS:
            raise ValueError(f"unexpected projected-points header {header}")
        rows = [row for row in reader if row]
    if not rows:
        return ProjectedPoints(np.zeros((0, 3)), np.zeros((0, 2)), np.zeros(0))
    pix = np.array([[int(r[0]), int(r[1])] for r in rows], dtype=np.int64)
    vals = np.array([[float(v) for v in r[2:]] for r in rows])
    return ProjectedPoints(vals[:, 1:4], pix, vals[:, 0])
