"""Synthetic scenes, a spinning multi-beam LIDAR and an exact visibility oracle.

Scenes are built from analytic primitives (a horizontal ground plane,
axis-aligned boxes, spheres) so ray intersections are exact. World frame is
the vehicle frame: x forward, y left, z up.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .geometry import CAMERA_FROM_VEHICLE, RigidTransform, rotation_y, rotation_z

VISIBILITY_TOL = 1e-6


@dataclass(frozen=True)
class Box:
    center: tuple
    size: tuple

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        object.__setattr__(self, "size", tuple(float(v) for v in self.size))
        if len(self.center) != 3 or len(self.size) != 3 or min(self.size) <= 0:
            raise ValueError("box needs a 3-d center and positive 3-d size")

    @property
    def lower(self):
        return np.subtract(self.center, np.multiply(self.size, 0.5))

    @property
    def upper(self):
        return np.add(self.center, np.multiply(self.size, 0.5))


@dataclass(frozen=True)
class Sphere:
    center: tuple
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        if len(self.center) != 3 or not self.radius > 0:
            raise ValueError("sphere needs a 3-d center and positive radius")


@dataclass(frozen=True)
class Scene:
    ground_z: float | None = 0.0
    boxes: tuple = ()
    spheres: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "boxes", tuple(self.boxes))
        object.__setattr__(self, "spheres", tuple(self.spheres))

    def cast(self, origins, dirs, tmax=np.inf):
        """Nearest hit distance per ray (``inf`` on miss)."""
        return kernels.ray_cast(
            origins, dirs, tmax,
            ground_z=self.ground_z,
            box_min=np.array([b.lower for b in self.boxes]).reshape(-1, 3),
            box_max=np.array([b.upper for b in self.boxes]).reshape(-1, 3),
            sph_center=np.array([s.center for s in self.spheres]).reshape(-1, 3),
            sph_radius=np.array([s.radius for s in self.spheres]),
        )

    def to_dict(self):
        return {
            "ground_z": self.ground_z,
            "boxes": [{"center": list(b.center), "size": list(b.size)} for b in self.boxes],
            "spheres": [{"center": list(s.center), "radius": s.radius} for s in self.spheres],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            ground_z=d.get("ground_z", 0.0),
            boxes=[Box(b["center"], b["size"]) for b in d.get("boxes", [])],
            spheres=[Sphere(s["center"], float(s["radius"])) for s in d.get("spheres", [])],
        )


def load_scene(path) -> Scene:
    with open(path) as f:
        return Scene.from_dict(json.load(f))


def save_scene(scene: Scene, path):
    Path(path).write_text(json.dumps(scene.to_dict(), indent=2) + "\n")


@dataclass(frozen=True)
class LidarConfig:
    """Spinning LIDAR: ``beams`` rays evenly spaced over the vertical FOV, swept in azimuth.

    Elevations span ``elevation_center +- vertical_fov/2`` degrees inclusive. The
    azimuth sweep covers ``azimuth_range`` (degrees, counter-clockwise from +x)
    at ``azimuth_step`` resolution.
    """

    beams: int = 64
    vertical_fov: float = 26.8
    elevation_center: float = 0.0
    spin_rate: float = 10.0
    azimuth_step: float = 0.2
    azimuth_range: tuple = (0.0, 360.0)
    max_range: float = 120.0
    pose: RigidTransform = field(default_factory=RigidTransform)

    def __post_init__(self):
        if self.beams < 1:
            raise ValueError("beam count must be >= 1")
        if not 0 < self.vertical_fov < 90:
            raise ValueError("vertical FOV must lie in (0, 90) degrees")
        steps = 360.0 / self.azimuth_step
        if self.azimuth_step <= 0 or abs(steps - round(steps)) > 1e-9:
            raise ValueError("azimuth step must divide 360 evenly")
        if not self.max_range > 0 or not self.spin_rate > 0:
            raise ValueError("max range and spin rate must be positive")
        object.__setattr__(self, "azimuth_range", tuple(float(a) for a in self.azimuth_range))

    def elevations(self):
        """Beam elevation angles in degrees, top beam first."""
        half = self.vertical_fov / 2
        if self.beams == 1:
            return np.array([self.elevation_center])
        return self.elevation_center + np.linspace(half, -half, self.beams)

    def azimuths(self):
        n_full = int(round(360.0 / self.azimuth_step))
        az = np.arange(n_full) * self.azimuth_step
        start, stop = self.azimuth_range
        if stop - start >= 360.0:
            return az
        rel = np.mod(az - start, 360.0)
        return az[rel <= (stop - start)]

    def ray_directions(self):
        """Unit ray directions in the sensor frame plus their beam indices, beam-major order."""
        el = np.radians(self.elevations())[:, None]
        az = np.radians(self.azimuths())[None, :]
        dirs = np.stack(
            np.broadcast_arrays(np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)), axis=-1
        ).reshape(-1, 3)
        beams = np.repeat(np.arange(self.beams), az.shape[1])
        return dirs, beams

    def to_dict(self):
        return {
            "beams": self.beams,
            "vertical_fov": self.vertical_fov,
            "elevation_center": self.elevation_center,
            "spin_rate": self.spin_rate,
            "azimuth_step": self.azimuth_step,
            "azimuth_range": list(self.azimuth_range),
            "max_range": self.max_range,
            "pose": [float(v) for v in self.pose.as_matrix().reshape(-1)],
        }

    @classmethod
    def from_dict(cls, d):
        casts = {"beams": int, "vertical_fov": float, "elevation_center": float, "spin_rate": float,
                 "azimuth_step": float, "max_range": float,
                 "azimuth_range": lambda v: tuple(float(a) for a in v), "pose": RigidTransform.from_matrix}
        kw = {}
        for key, value in d.items():
            if key not in casts:
                raise ValueError(f"unknown LIDAR parameter {key!r}")
            try:
                kw[key] = casts[key](value)
            except (TypeError, ValueError) as e:
                raise ValueError(f"{key}: {e}") from None
        return cls(**kw)


@dataclass(frozen=True)
class PointCloudFrame:
    """One LIDAR revolution; ``points`` are in the sensor frame."""

    timestamp: float
    points: np.ndarray
    ranges: np.ndarray
    beams: np.ndarray

    def __len__(self):
        return len(self.ranges)


def simulate_scan(scene: Scene, cfg: LidarConfig, t: float = 0.0, noise_std: float = 0.0,
                  rng: np.random.Generator | None = None) -> PointCloudFrame:
    """Cast every (beam, azimuth) ray and keep the nearest hit within ``max_range``.

    Deterministic for a given scene and config. ``noise_std`` (meters) adds
    Gaussian range noise drawn from ``rng``; returns are still clipped to the
    valid range interval.
    """
    dirs, beams = cfg.ray_directions()
    world_dirs = dirs @ cfg.pose.rotation.T
    dist = scene.cast(cfg.pose.translation, world_dirs, cfg.max_range)
    hit = np.isfinite(dist)
    dist, dirs, beams = dist[hit], dirs[hit], beams[hit]
    if noise_std > 0:
        if rng is None:
            raise ValueError("range noise requires a random generator")
        dist = np.clip(dist + rng.normal(0.0, noise_std, dist.shape), 1e-3, cfg.max_range)
    return PointCloudFrame(float(t), dirs * dist[:, None], dist, beams.astype(np.int64))


def visibility_oracle(scene: Scene, camera_pose: RigidTransform, pts) -> np.ndarray:
    """True where the segment from the camera center to the world point is unobstructed.

    A point counts as occluded only if a primitive is hit more than
    ``VISIBILITY_TOL`` before it, so points lying on a surface stay visible.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
    if len(pts) == 0:
        return np.zeros(0, dtype=bool)
    center = camera_pose.translation
    delta = pts - center
    dist = np.linalg.norm(delta, axis=1)
    dirs = delta / np.where(dist > 0, dist, 1.0)[:, None]
    hit = scene.cast(center, dirs)
    return ~(hit < dist - VISIBILITY_TOL)


@dataclass(frozen=True)
class FrameStream:
    timestamps: np.ndarray
    payloads: tuple = ()
    rate: float | None = None

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=np.float64).reshape(-1)
        if len(ts) > 1 and np.any(np.diff(ts) <= 0):
            raise ValueError("stream timestamps must be strictly increasing")
        if self.payloads and len(self.payloads) != len(ts):
            raise ValueError("payload count does not match timestamp count")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "payloads", tuple(self.payloads))

    def __len__(self):
        return len(self.timestamps)

    @classmethod
    def regular(cls, rate, count, start=0.0, payloads=()):
        return cls(start + np.arange(count) / rate, payloads, rate)


def associate_frames(lidar: FrameStream, camera: FrameStream):
    """Pair every camera frame with the LIDAR frame closest in time (ties -> earlier LIDAR frame)."""
    if len(lidar) == 0 or len(camera) == 0:
        raise ValueError("both streams must be non-empty")
    lt = lidar.timestamps
    ct = camera.timestamps
    if len(lt) == 1:
        idx = np.zeros(len(ct), dtype=np.int64)
    else:
        after = np.clip(np.searchsorted(lt, ct), 1, len(lt) - 1)
        before = after - 1
        idx = np.where(ct - lt[before] <= lt[after] - ct, before, after)
    return [(int(c), int(i)) for c, i in enumerate(idx)]


def association_errors(lidar: FrameStream, camera: FrameStream, pairs):
    return np.array([abs(camera.timestamps[c] - lidar.timestamps[i]) for c, i in pairs])


def write_manifest(stream: FrameStream, path):
    """Stream manifest: optional ``# rate_hz=`` header then ``timestamp [payload]`` per line."""
    lines = []
    if stream.rate is not None:
        lines.append(f"# rate_hz={stream.rate!r}")
    for i, t in enumerate(stream.timestamps):
        payload = stream.payloads[i] if stream.payloads else ""
        lines.append(f"{float(t)!r} {payload}".rstrip())
    Path(path).write_text("\n".join(lines) + "\n")


def read_manifest(path) -> FrameStream:
    rate = None
    ts, payloads = [], []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            if line[1:].strip().startswith("rate_hz="):
                rate = float(line.split("=", 1)[1])
            continue
        parts = line.split(maxsplit=1)
        ts.append(float(parts[0]))
        payloads.append(parts[1] if len(parts) > 1 else "")
    if not any(payloads):
        payloads = []
    return FrameStream(np.array(ts), tuple(payloads), rate)


# point-cloud files: CSV and a little-endian binary record stream with the same columns
CLOUD_COLUMNS = ("timestamp", "x", "y", "z", "range", "beam")
CLOUD_MAGIC = b"FDPC0001"
CLOUD_DTYPE = np.dtype([
    ("timestamp", "<f8"), ("x", "<f8"), ("y", "<f8"), ("z", "<f8"), ("range", "<f8"), ("beam", "<u2"),
])


def write_cloud_csv(frame: PointCloudFrame, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(CLOUD_COLUMNS)
        for p, r, b in zip(frame.points, frame.ranges, frame.beams):
            w.writerow([repr(frame.timestamp), repr(float(p[0])), repr(float(p[1])), repr(float(p[2])),
                        repr(float(r)), int(b)])


def read_cloud_csv(path) -> PointCloudFrame:
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if tuple(header) != CLOUD_COLUMNS:
            raise ValueError(f"unexpected point-cloud header {header}")
        rows = [row for row in reader if row]
    if not rows:
        return PointCloudFrame(0.0, np.zeros((0, 3)), np.zeros(0), np.zeros(0, np.int64))
    arr = np.array([[float(v) for v in row[:5]] for row in rows])
    beams = np.array([int(row[5]) for row in rows], dtype=np.int64)
    return PointCloudFrame(float(arr[0, 0]), arr[:, 1:4], arr[:, 4], beams)


def encode_cloud(frame: PointCloudFrame) -> bytes:
    rec = np.empty(len(frame), dtype=CLOUD_DTYPE)
    rec["timestamp"] = frame.timestamp
    rec["x"], rec["y"], rec["z"] = frame.points.T if len(frame) else (0, 0, 0)
    rec["range"] = frame.ranges
    rec["beam"] = frame.beams
    return CLOUD_MAGIC + np.uint64(len(frame)).astype("<u8").tobytes() + rec.tobytes()


def decode_cloud(data: bytes, timestamp: float = 0.0) -> PointCloudFrame:
    if data[:8] != CLOUD_MAGIC:
        raise ValueError("not a point-cloud record file")
    n = int(np.frombuffer(data, "<u8", count=1, offset=8)[0])
    rec = np.frombuffer(data, CLOUD_DTYPE, count=n, offset=16)
    if n:
        timestamp = float(rec["timestamp"][0])
    pts = np.stack([rec["x"], rec["y"], rec["z"]], axis=1).astype(np.float64)
    return PointCloudFrame(timestamp, pts, rec["range"].astype(np.float64), rec["beam"].astype(np.int64))


def camera_pose_from_calibration(lidar_pose: RigidTransform, camera_from_lidar: RigidTransform):
    """World pose of the camera (camera frame -> world) given the LIDAR mount and the extrinsic."""
    return lidar_pose @ camera_from_lidar.inverse()


def camera_mount(position, yaw=0.0, pitch=0.0) -> RigidTransform:
    """Camera-to-world pose for a camera at ``position`` looking along +x, rotated by yaw then pitch (rad)."""
    # world_from_cam = Rz(yaw) Ry(pitch) * vehicle_from_camera_axes
    r = rotation_z(yaw) @ rotation_y(pitch) @ CAMERA_FROM_VEHICLE.T
    return RigidTransform(r, position)


# -- scene generators --------------------------------------------------------------------------

def urban_demo_scene() -> Scene:
    """Open boulevard: staggered building blocks 26 m off the centerline, parked cars, poles, people and trees."""
    g = -0.9
    boxes = []
    for i, x0 in enumerate(range(-40, 100, 18)):
        # 10 m blocks with 8 m gaps; heights cycle so the skyline is not flat
        h_left, h_right = 5.0 + 2 * (i % 3), 4.0 + 2 * ((i + 1) % 3)
        boxes.append(Box((x0 + 5.0, 31.0, g + h_left / 2), (10.0, 10.0, h_left)))
        boxes.append(Box((x0 + 9.0, -31.0, g + h_right / 2), (10.0, 10.0, h_right)))
    for x, y in [(9.0, 4.5), (16.0, -4.2), (24.0, 4.4), (-10.0, -4.3), (34.0, -4.5)]:
        boxes.append(Box((x, y, g + 0.75), (4.4, 1.8, 1.5)))
    for x in (6.0, 18.0, 30.0, 42.0):
        boxes.append(Box((x, 6.4, g + 2.5), (0.3, 0.3, 5.0)))
    spheres = [Sphere((12.0, 3.0, g + 0.9), 0.4), Sphere((7.0, -2.5, g + 0.8), 0.35)]
    spheres += [Sphere((float(x), -7.5, g + 4.0), 2.0) for x in (10, 26, 50)]
    return Scene(ground_z=g, boxes=boxes, spheres=spheres)


def default_rig():
    """Roof LIDAR 1.9 m above ground; forward fisheye 1.5 m ahead of it and 0.4 m lower.

    World = vehicle frame with the ground at z = -0.9. Returns (lidar pose, camera pose).
    """
    lidar_pose = RigidTransform(np.eye(3), (0.0, 0.0, 1.0))
    camera_pose = camera_mount((1.5, 0.0, 0.6), pitch=math.radians(5.0))
    return lidar_pose, camera_pose


def random_occluder_scene(rng: np.random.Generator, n_boxes: int | None = None) -> Scene:
    """Boxes standing between the rig and a back wall, for occlusion tests."""
    if n_boxes is None:
        n_boxes = int(rng.integers(2, 6))
    boxes = [Box((float(rng.uniform(22.0, 32.0)), 0.0, 5.0), (1.0, 60.0, 12.0))]
    for _ in range(n_boxes):
        x = float(rng.uniform(5.0, 14.0))
        y = float(rng.uniform(-6.0, 6.0))
        w = float(rng.uniform(0.6, 3.0))
        d = float(rng.uniform(0.5, 2.5))
        h = float(rng.uniform(0.8, 3.0))
        boxes.append(Box((x, y, -0.9 + h / 2), (d, w, h)))
    return Scene(ground_z=-0.9, boxes=boxes)
