"""Rigid transforms and the radial fisheye camera model.

Camera frame convention: z forward (optical axis), x right, y down. Vehicle /
LIDAR frames: x forward, y left, z up. Depth everywhere is Euclidean range
``|p|``, which stays well defined for rays beyond 90 degrees off-axis.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ORTHO_TOL = 1e-9
BISECTION_TOL = 1e-12

# rotation taking vehicle-frame vectors (x fwd, y left, z up) to camera axes (x right, y down, z fwd)
CAMERA_FROM_VEHICLE = np.array([[0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]])


def rotation_x(angle):
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rotation_y(angle):
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rotation_z(angle):
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class RigidTransform:
    """Proper rigid motion ``p -> R @ p + t``."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        r = np.array(self.rotation, dtype=np.float64)
        t = np.array(self.translation, dtype=np.float64).reshape(-1)
        if r.shape != (3, 3) or t.shape != (3,):
            raise ValueError("rotation must be 3x3 and translation a 3-vector")
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(t))):
            raise ValueError("transform has non-finite entries")
        if np.max(np.abs(r.T @ r - np.eye(3))) > ORTHO_TOL or abs(np.linalg.det(r) - 1.0) > ORTHO_TOL:
            raise ValueError("rotation is not orthonormal with determinant +1")
        r.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls):
        return cls()

    @classmethod
    def from_matrix(cls, m):
        m = np.asarray(m, dtype=np.float64)
        if m.shape == (16,):
            m = m.reshape(4, 4)
        if m.shape != (4, 4) or not np.allclose(m[3], [0.0, 0.0, 0.0, 1.0]):
            raise ValueError("expected a homogeneous 4x4 matrix")
        return cls(m[:3, :3], m[:3, 3])

    def as_matrix(self):
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def inverse(self):
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def __matmul__(self, other):
        """``(a @ b)(p) == a(b(p))``."""
        if not isinstance(other, RigidTransform):
            return NotImplemented
        return RigidTransform(self.rotation @ other.rotation,
                              self.rotation @ other.translation + self.translation)

    def apply(self, pts):
        return transform_points(self, pts)


def transform_points(t: RigidTransform, pts) -> np.ndarray:
    """Apply ``t`` to an ``(N, 3)`` array (or a single 3-vector)."""
    pts = np.asarray(pts, dtype=np.float64)
    return pts @ t.rotation.T + t.translation


@dataclass(frozen=True)
class FisheyeIntrinsics:
    """Odd-polynomial radial fisheye model.

    Image radius as a function of incidence angle ``theta``::

        r(theta) = f * (k1*theta + k2*theta**3 + k3*theta**5 + k4*theta**7)

    With the default ``k = (1, 0, 0, 0)`` this is the equidistant model. ``theta_max``
    may exceed pi/2, giving a field of view wider than 180 degrees.
    """

    focal: float
    cx: float
    cy: float
    width: int
    height: int
    k: tuple = (1.0, 0.0, 0.0, 0.0)
    theta_max: float = math.pi / 2

    def __post_init__(self):
        k = tuple(float(c) for c in self.k)
        if len(k) != 4:
            raise ValueError("exactly four radial coefficients k1..k4 are required")
        object.__setattr__(self, "k", k)
        if not self.focal > 0:
            raise ValueError("focal scale must be positive")
        if not 0 < self.theta_max <= math.pi:
            raise ValueError("theta_max must lie in (0, pi]")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image size must be positive")
        if not _is_strictly_increasing(k, self.theta_max):
            raise ValueError("r(theta) is not strictly increasing on [0, theta_max]")

    @property
    def size(self):
        return (self.width, self.height)

    @property
    def r_max(self):
        return float(self.radius(self.theta_max))

    def radius(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        t2 = theta * theta
        k1, k2, k3, k4 = self.k
        return self.focal * theta * (k1 + t2 * (k2 + t2 * (k3 + t2 * k4)))

    def incidence_angle(self, r):
        """Invert ``radius`` by bisection; ``r`` must lie in ``[0, r_max]``."""
        r = np.asarray(r, dtype=np.float64)
        if np.any(r < 0) or np.any(r > self.r_max):
            raise ValueError("pixel radius outside the invertible range of r(theta)")
        lo = np.zeros_like(r)
        hi = np.full_like(r, self.theta_max)
        n_iter = int(math.ceil(math.log2(self.theta_max / BISECTION_TOL))) + 1
        for _ in range(n_iter):
            mid = 0.5 * (lo + hi)
            below = self.radius(mid) < r
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return 0.5 * (lo + hi)

    def to_dict(self):
        return {
            "focal": self.focal,
            "principal_point": [self.cx, self.cy],
            "image_size": [self.width, self.height],
            "coefficients": list(self.k),
            "theta_max": self.theta_max,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            focal=float(d["focal"]),
            cx=float(d["principal_point"][0]),
            cy=float(d["principal_point"][1]),
            width=int(d["image_size"][0]),
            height=int(d["image_size"][1]),
            k=tuple(d.get("coefficients", (1.0, 0.0, 0.0, 0.0))),
            theta_max=float(d.get("theta_max", math.pi / 2)),
        )


def _is_strictly_increasing(k, theta_max):
    # r'(theta)/f = k1 + 3 k2 u + 5 k3 u^2 + 7 k4 u^3 with u = theta^2 must stay > 0 on [0, theta_max^2]
    k1, k2, k3, k4 = k
    coeffs = [7 * k4, 5 * k3, 3 * k2, k1]
    u_max = theta_max * theta_max
    while coeffs and coeffs[0] == 0:
        coeffs.pop(0)
    if not coeffs:
        return False
    candidates = list(np.linspace(0.0, u_max, 257))
    if len(coeffs) > 1:
        candidates += [z.real for z in np.roots(coeffs) if abs(z.imag) < 1e-12 and 0 <= z.real <= u_max]
    return bool(np.all(np.polyval(coeffs, np.array(candidates)) > 0))


def project_points(pts, k: FisheyeIntrinsics):
    """Vectorized projection of camera-frame points.

    Returns ``(pixels, ranges, in_view)``; ``pixels`` is ``(N, 2)`` as (u, v) with
    u along image columns. Out-of-view rows keep their computed coordinates
    (NaN beyond ``theta_max``) but are flagged False in ``in_view``.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    rho = np.hypot(x, y)
    rng = np.sqrt(rho * rho + z * z)
    if np.any(rng == 0):
        raise ValueError("cannot project a zero-norm point")
    theta = np.arctan2(rho, z)
    phi = np.arctan2(y, x)
    ok = theta <= k.theta_max
    r = np.where(ok, k.radius(np.where(ok, theta, 0.0)), np.nan)
    u = k.cx + r * np.cos(phi)
    v = k.cy + r * np.sin(phi)
    with np.errstate(invalid="ignore"):
        in_view = ok & (u >= 0) & (u < k.width) & (v >= 0) & (v < k.height)
    return np.stack([u, v], axis=1), rng, in_view


def project_fisheye(p, k: FisheyeIntrinsics):
    """Project one camera-frame point; returns ``((u, v), range)`` or None when out of view."""
    pix, rng, ok = project_points(np.reshape(p, (1, 3)), k)
    if not ok[0]:
        return None
    return (float(pix[0, 0]), float(pix[0, 1])), float(rng[0])


def unproject_points(pixels, ranges, k: FisheyeIntrinsics):
    pixels = np.atleast_2d(np.asarray(pixels, dtype=np.float64))
    ranges = np.asarray(ranges, dtype=np.float64).reshape(-1)
    if np.any(ranges <= 0):
        raise ValueError("range must be positive")
    du = pixels[:, 0] - k.cx
    dv = pixels[:, 1] - k.cy
    theta = k.incidence_angle(np.hypot(du, dv))
    phi = np.arctan2(dv, du)
    s = np.sin(theta)
    dirs = np.stack([s * np.cos(phi), s * np.sin(phi), np.cos(theta)], axis=1)
    return dirs * ranges[:, None]


def unproject_fisheye(pixel, rng, k: FisheyeIntrinsics):
    return unproject_points(np.reshape(pixel, (1, 2)), [rng], k)[0]


@dataclass(frozen=True)
class Calibration:
    """Camera intrinsics plus the LIDAR-to-camera extrinsic transform."""

    intrinsics: FisheyeIntrinsics
    camera_from_lidar: RigidTransform

    def to_dict(self):
        d = self.intrinsics.to_dict()
        d["extrinsic"] = [float(v) for v in self.camera_from_lidar.as_matrix().reshape(-1)]
        return d

    @classmethod
    def from_dict(cls, d):
        ext = d.get("extrinsic")
        t = RigidTransform() if ext is None else RigidTransform.from_matrix(ext)
        return cls(FisheyeIntrinsics.from_dict(d), t)


def load_calibration(path) -> Calibration:
    """Read a calibration JSON file.

    Keys: ``focal`` (px/rad), ``principal_point`` [cx, cy], ``image_size`` [W, H],
    ``coefficients`` [k1..k4], ``theta_max`` (rad), ``extrinsic`` (16 numbers,
    row-major 4x4 LIDAR-to-camera matrix).
    """
    with open(path) as f:
        return Calibration.from_dict(json.load(f))


def save_calibration(calib: Calibration, path):
    Path(path).write_text(json.dumps(calib.to_dict(), indent=2) + "\n")
