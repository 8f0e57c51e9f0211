import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fisheyedepth.geometry import (
    CAMERA_FROM_VEHICLE, Calibration, FisheyeIntrinsics, RigidTransform, load_calibration,
    project_fisheye, project_points, rotation_x, rotation_y, rotation_z, save_calibration,
    transform_points, unproject_fisheye, unproject_points,
)

EQUI = FisheyeIntrinsics(100.0, 640.0, 400.0, 1280, 800)
angles = st.floats(-math.pi, math.pi, allow_nan=False)
coords = st.floats(-50, 50, allow_nan=False)


def random_transform(rng):
    q = rng.normal(size=4)
    w, x, y, z = q / np.linalg.norm(q)
    r = np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])
    return RigidTransform(r, rng.normal(scale=5.0, size=3))


class TestRigidTransform:
    def test_identity(self):
        assert np.array_equal(transform_points(RigidTransform.identity(), [1.0, 2.0, 3.0]), [1.0, 2.0, 3.0])

    def test_pure_translation(self):
        t = RigidTransform(np.eye(3), (0, 0, 5))
        assert np.array_equal(t.apply([0.0, 0.0, 0.0]), [0.0, 0.0, 5.0])

    def test_rotation_inverse_roundtrip(self):
        t = RigidTransform(rotation_y(math.pi / 2), (1.0, -2.0, 0.5))
        p = np.array([[0.3, -4.0, 7.0]])
        assert np.allclose(t.inverse().apply(t.apply(p)), p, atol=1e-9, rtol=0)

    def test_inverse_composes_to_identity(self, rng):
        for _ in range(20):
            t = random_transform(rng)
            m = (t.inverse() @ t).as_matrix()
            assert np.max(np.abs(m - np.eye(4))) < 1e-9

    def test_composition_order_and_associativity(self, rng):
        a, b, c = (random_transform(rng) for _ in range(3))
        p = rng.normal(size=(10, 3))
        assert np.allclose((a @ b).apply(p), a.apply(b.apply(p)), atol=1e-12)
        assert np.allclose(((a @ b) @ c).as_matrix(), (a @ (b @ c)).as_matrix(), atol=1e-12)

    def test_rejects_reflection_and_skew(self):
        with pytest.raises(ValueError):
            RigidTransform(np.diag([1.0, 1.0, -1.0]))
        with pytest.raises(ValueError):
            RigidTransform(np.eye(3) * 1.001)

    def test_matrix_roundtrip(self, rng):
        t = random_transform(rng)
        u = RigidTransform.from_matrix(t.as_matrix().reshape(-1))
        assert np.array_equal(u.rotation, t.rotation) and np.array_equal(u.translation, t.translation)

    def test_preserves_pairwise_distances(self, rng):
        t = random_transform(rng)
        p = rng.uniform(-30, 30, size=(40, 3))
        q = t.apply(p)
        d0 = np.linalg.norm(p[:, None] - p[None], axis=-1)
        d1 = np.linalg.norm(q[:, None] - q[None], axis=-1)
        assert np.max(np.abs(d0 - d1)) < 1e-9

    def test_basic_rotations_are_right_handed(self):
        assert np.allclose(rotation_z(math.pi / 2) @ [1, 0, 0], [0, 1, 0])
        assert np.allclose(rotation_x(math.pi / 2) @ [0, 1, 0], [0, 0, 1])
        assert np.allclose(rotation_y(math.pi / 2) @ [0, 0, 1], [1, 0, 0])

    def test_camera_axes_from_vehicle(self):
        # forward -> +z, left -> -x, up -> -y
        assert np.array_equal(CAMERA_FROM_VEHICLE @ [1, 0, 0], [0, 0, 1])
        assert np.array_equal(CAMERA_FROM_VEHICLE @ [0, 1, 0], [-1, 0, 0])
        assert np.array_equal(CAMERA_FROM_VEHICLE @ [0, 0, 1], [0, -1, 0])


class TestIntrinsics:
    def test_validation(self):
        with pytest.raises(ValueError):
            FisheyeIntrinsics(0.0, 0, 0, 10, 10)
        with pytest.raises(ValueError):
            FisheyeIntrinsics(1.0, 0, 0, 10, 10, theta_max=4.0)
        with pytest.raises(ValueError):
            # r'(theta) turns negative before theta_max
            FisheyeIntrinsics(1.0, 0, 0, 10, 10, k=(1.0, -0.5, 0.0, 0.0), theta_max=1.5)

    def test_non_monotone_dip_between_grid_points_is_caught(self):
        # derivative 1 - 3*0.2*u + ... chosen so the only negative stretch is narrow
        k1 = 1.0
        # r'/f = k1 + 3 k2 u + 5 k3 u^2 has a double root at u0 when k1=5 k3 u0^2, 3 k2 = -10 k3 u0
        u0 = 1.0
        k3 = k1 / (5 * u0 * u0) * 1.0001
        k2 = -10 * k3 * u0 / 3
        with pytest.raises(ValueError):
            FisheyeIntrinsics(1.0, 0, 0, 10, 10, k=(k1, k2 * 1.0002, k3, 0.0), theta_max=1.4)

    def test_bisection_inverse(self):
        k = FisheyeIntrinsics(300.0, 0, 0, 10, 10, k=(1.0, -0.05, 0.004, -0.0001), theta_max=math.radians(100))
        theta = np.linspace(0, k.theta_max, 101)
        assert np.max(np.abs(k.incidence_angle(k.radius(theta)) - theta)) < 1e-11

    def test_incidence_angle_domain(self):
        with pytest.raises(ValueError):
            EQUI.incidence_angle(EQUI.r_max + 1.0)


class TestProjection:
    def test_optical_axis_hits_principal_point(self):
        (u, v), r = project_fisheye([0.0, 0.0, 10.0], EQUI)
        assert (u, v) == (640.0, 400.0) and r == 10.0

    def test_equidistant_closed_form(self):
        (u, v), r = project_fisheye([1.0, 0.0, 0.0], EQUI)
        # derived: 640 + 100*pi/2
        assert u == pytest.approx(797.0796326794897, abs=1e-9)
        assert v == pytest.approx(400.0, abs=1e-9)
        assert r == 1.0

    def test_behind_camera_out_of_view(self):
        assert project_fisheye([0.0, 0.0, -1.0], EQUI) is None

    def test_off_image_out_of_view(self):
        narrow = FisheyeIntrinsics(1000.0, 50.0, 50.0, 100, 100)
        assert project_fisheye([1.0, 0.0, 1.0], narrow) is None

    def test_wide_fov_beyond_ninety_degrees(self, demo_intrinsics):
        p = [math.sin(math.radians(93)), 0.0, math.cos(math.radians(93))]
        (u, _), r = project_fisheye(p, demo_intrinsics)
        assert u == pytest.approx(640 + 360 * math.radians(93), abs=1e-9)
        assert r == pytest.approx(1.0)

    def test_zero_norm_rejected(self):
        with pytest.raises(ValueError):
            project_fisheye([0.0, 0.0, 0.0], EQUI)

    def test_range_is_euclidean(self, rng):
        p = rng.normal(size=(50, 3)) + [0, 0, 3]
        _, r, _ = project_points(p, EQUI)
        assert np.allclose(r, np.linalg.norm(p, axis=1), rtol=1e-15)

    @given(psi=angles, x=coords, y=coords, z=st.floats(0.1, 50))
    def test_radial_symmetry(self, psi, x, y, z):
        p = np.array([x, y, z])
        q = rotation_z(psi) @ p
        big = FisheyeIntrinsics(100.0, 0.0, 0.0, 10 ** 6, 10 ** 6)
        pu, _, _ = project_points(p, big)
        qu, _, _ = project_points(q, big)
        c, s = math.cos(psi), math.sin(psi)
        expected = np.array([[c, -s], [s, c]]) @ pu[0]
        assert np.allclose(qu[0], expected, atol=1e-9 * max(1.0, np.abs(pu).max()))


class TestUnprojection:
    def test_principal_point(self):
        assert np.allclose(unproject_fisheye((640.0, 400.0), 5.0, EQUI), [0.0, 0.0, 5.0], atol=1e-12)

    def test_roundtrip_thousand_points(self, rng, demo_intrinsics):
        k = demo_intrinsics
        theta = rng.uniform(0, k.theta_max, 4000)
        phi = rng.uniform(-math.pi, math.pi, 4000)
        d = rng.uniform(0.5, 80, 4000)
        p = np.stack([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)], 1) * d[:, None]
        pix, rng_, ok = project_points(p, k)
        pix, rng_ = pix[ok][:1000], rng_[ok][:1000]
        assert len(pix) == 1000
        back = unproject_points(pix, rng_, k)
        pix2, rng2, ok2 = project_points(back, k)
        assert ok2.all()
        assert np.max(np.abs(pix2 - pix)) < 1e-6
        assert np.max(np.abs(rng2 - rng_)) < 1e-9

    def test_outside_invertible_radius(self):
        with pytest.raises(ValueError):
            unproject_fisheye((640.0 + EQUI.r_max + 1.0, 400.0), 1.0, EQUI)

    def test_nonpositive_range(self):
        with pytest.raises(ValueError):
            unproject_fisheye((640.0, 400.0), 0.0, EQUI)


def test_calibration_file_roundtrip(tmp_path, rng):
    k = FisheyeIntrinsics(321.5, 600.25, 390.5, 1280, 800, k=(1.0, -0.02, 0.001, 0.0), theta_max=1.7)
    cal = Calibration(k, random_transform(rng))
    path = tmp_path / "calib.json"
    save_calibration(cal, path)
    assert set(json.loads(path.read_text())) == {
        "focal", "principal_point", "image_size", "coefficients", "theta_max", "extrinsic"}
    back = load_calibration(path)
    assert back.intrinsics == k
    assert np.array_equal(back.camera_from_lidar.as_matrix(), cal.camera_from_lidar.as_matrix())
