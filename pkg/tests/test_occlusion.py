import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fisheyedepth import occlusion, scansim
from fisheyedepth.occlusion import (
    LayerConfig, ProjectedPoints, assign_layers, build_layer_stack, dilate_layer, filter_occluded,
    remove_occluded,
)


def brute_dilate(grid, r):
    h, w = grid.shape
    out = np.zeros_like(grid, dtype=bool)
    for y, x in zip(*np.nonzero(grid)):
        out[max(0, y - r):y + r + 1, max(0, x - r):x + r + 1] = True
    return out


def brute_removed(pixels, ranges, cfg, size):
    """Direct evaluation of the rule, independent of the package's stack code."""
    w, h = size
    d = np.asarray(cfg.distances)
    layer = [int(np.flatnonzero(np.abs(r - d) == np.abs(r - d).min())[0]) for r in ranges]
    occ = np.zeros((len(d), h, w), dtype=bool)
    for (c, r), k in zip(pixels, layer):
        occ[k, r, c] = True
    dil = [brute_dilate(occ[i], cfg.dilation_radius) for i in range(len(d))]
    out = []
    for (c, r), rng, k in zip(pixels, ranges, layer):
        out.append(any(dil[i][r, c] and rng - d[i] > cfg.margin for i in range(k)))
    return np.array(out, dtype=bool)


def pts_from(pixels, ranges):
    return ProjectedPoints.from_ranges(np.asarray(pixels).reshape(-1, 2), ranges)


@st.composite
def point_sets(draw, max_points=40, size=(24, 16)):
    n = draw(st.integers(0, max_points))
    cols = draw(st.lists(st.integers(0, size[0] - 1), min_size=n, max_size=n))
    rows = draw(st.lists(st.integers(0, size[1] - 1), min_size=n, max_size=n))
    ranges = draw(st.lists(st.floats(0.5, 80.0), min_size=n, max_size=n))
    return pts_from(np.stack([cols, rows], 1) if n else np.zeros((0, 2)), ranges)


class TestLayerConfig:
    def test_defaults(self):
        cfg = LayerConfig()
        assert cfg.count == 12 and cfg.dilation_radius == 2 and cfg.margin == 0.5
        assert cfg.distances[0] == pytest.approx(1.0) and cfg.distances[-1] == pytest.approx(60.0)
        assert np.allclose(np.diff(np.log(cfg.distances)), np.log(60.0) / 11)

    @pytest.mark.parametrize("kw", [{"distances": ()}, {"distances": (2.0, 1.0)}, {"distances": (1.0, 1.0)},
                                    {"dilation_radius": -1}, {"margin": -0.1}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            LayerConfig(**kw)

    def test_dict_forms(self):
        assert LayerConfig.from_dict(LayerConfig().to_dict()) == LayerConfig()
        assert LayerConfig.from_dict({"count": 12, "near": 1.0, "far": 60.0}) == LayerConfig()


class TestAssignment:
    def test_exact_layer(self):
        assert assign_layers([20.0], (5.0, 20.0, 40.0)).tolist() == [1]

    def test_midpoint_goes_to_nearer(self):
        assert assign_layers([12.5, 30.0], (5.0, 20.0, 40.0)).tolist() == [0, 1]

    def test_point_at_exact_layer_occupies_only_that_layer(self):
        cfg = LayerConfig((5.0, 20.0, 40.0), 0, 0.5)
        stack = build_layer_stack(pts_from([[3, 2]], [20.0]), cfg, (8, 6))
        assert stack.raw.sum(axis=(1, 2)).tolist() == [0, 1, 0]

    def test_empty(self):
        stack = build_layer_stack(pts_from(np.zeros((0, 2)), []), LayerConfig(), (8, 6))
        assert not stack.raw.any() and not stack.dilated.any()

    def test_out_of_bounds_rejected(self):
        with pytest.raises(ValueError):
            build_layer_stack(pts_from([[8, 0]], [3.0]), LayerConfig(), (8, 6))


class TestDilation:
    def test_single_pixel_radius_one(self):
        g = np.zeros((5, 5), dtype=bool)
        g[2, 2] = True
        out = dilate_layer(g, 1)
        assert out.sum() == 9 and out[1:4, 1:4].all()

    def test_radius_zero_identity(self, rng):
        g = rng.random((9, 11)) < 0.2
        assert np.array_equal(dilate_layer(g, 0), g)

    def test_gap_stays_open(self):
        g = np.zeros((3, 7), dtype=bool)
        g[1, 1] = g[1, 4] = True
        out = dilate_layer(g, 1)
        assert out[1, 2] and out[1, 3]
        g2 = np.zeros((3, 8), dtype=bool)
        g2[1, 1] = g2[1, 5] = True
        # pixels 3 apart: the middle pixel 3 is within radius 1 of neither
        assert not dilate_layer(g2, 1)[1, 3]

    @given(st.integers(0, 4), st.integers(0, 2 ** 32 - 1))
    def test_matches_brute_force(self, r, seed):
        g = np.random.default_rng(seed).random((13, 17)) < 0.08
        assert np.array_equal(dilate_layer(g, r), brute_dilate(g, r))


class TestFilter:
    def test_two_points_same_pixel(self):
        cfg = LayerConfig((5.0, 20.0), 1, 0.5)
        kept, removed = remove_occluded(pts_from([[2, 2], [2, 2]], [5.0, 20.0]), cfg, (6, 6))
        assert removed.tolist() == [False, True] and kept.ranges.tolist() == [5.0]

    def test_single_point_kept(self):
        kept, removed = remove_occluded(pts_from([[0, 0]], [37.0]), LayerConfig(), (4, 4))
        assert not removed.any() and len(kept) == 1

    def test_margin_respected(self):
        cfg = LayerConfig((5.0, 6.0), 1, 1.5)
        _, removed = remove_occluded(pts_from([[1, 1], [1, 1]], [5.0, 6.2]), cfg, (4, 4))
        assert not removed.any()

    def test_order_preserved(self):
        cfg = LayerConfig((5.0, 20.0), 1, 0.5)
        pix = [[2, 2], [0, 0], [2, 3], [5, 5]]
        kept, removed = remove_occluded(pts_from(pix, [20.0, 3.0, 5.0, 19.0]), cfg, (6, 6))
        assert removed.tolist() == [True, False, False, False]
        assert kept.ranges.tolist() == [3.0, 5.0, 19.0]

    @given(point_sets(), st.integers(0, 3), st.sampled_from([0.0, 0.5, 2.0]))
    def test_matches_brute_force_rule(self, pts, radius, margin):
        cfg = LayerConfig.log_spaced(6, 1.0, 60.0, dilation_radius=radius, margin=margin)
        _, removed = remove_occluded(pts, cfg, (24, 16))
        assert np.array_equal(removed, brute_removed(pts.pixels, pts.ranges, cfg, (24, 16)))

    @given(point_sets())
    def test_properties(self, pts):
        size = (24, 16)
        cfg = LayerConfig.log_spaced(6, 1.0, 60.0, dilation_radius=1)
        kept, removed = remove_occluded(pts, cfg, size)
        layers = assign_layers(pts.ranges, cfg.distances)
        # nearest layer never loses points
        assert not removed[layers == 0].any()
        # idempotent
        assert not remove_occluded(kept, cfg, size)[1].any()
        # points sharing one layer never occlude each other
        for k in np.unique(layers):
            sub = pts.subset(layers == k)
            assert not remove_occluded(sub, cfg, size)[1].any()

    @given(point_sets())
    def test_monotone_in_radius(self, pts):
        prev = np.zeros(len(pts), dtype=bool)
        for r in range(5):
            _, removed = remove_occluded(pts, LayerConfig.log_spaced(6, dilation_radius=r), (24, 16))
            assert not (prev & ~removed).any()
            prev = removed


def test_demo_scene_box_wall(demo_intrinsics):
    """A box between the rig and a wall; the filter should agree with the ray-cast oracle on most points."""
    scene = scansim.Scene(ground_z=-0.9, boxes=[scansim.Box((10.0, 0.0, 0.6), (1.0, 3.0, 3.0)),
                                                 scansim.Box((25.0, 0.0, 5.0), (1.0, 60.0, 12.0))])
    lidar_pose, cam_pose = scansim.default_rig()
    frame = scansim.simulate_scan(scene, scansim.LidarConfig(pose=lidar_pose))
    world = lidar_pose.apply(frame.points)
    pp = ProjectedPoints.from_camera_points(cam_pose.inverse().apply(world), demo_intrinsics)
    visible = scansim.visibility_oracle(scene, cam_pose, cam_pose.apply(pp.points))
    _, removed = remove_occluded(pp, LayerConfig(), demo_intrinsics.size)
    assert (~visible).sum() > 100
    assert np.mean(removed == ~visible) >= 0.95


def test_projected_csv_roundtrip_and_layer_dump(tmp_path, rng):
    pts = ProjectedPoints(rng.normal(size=(30, 3)), rng.integers(0, 20, (30, 2)), rng.uniform(1, 50, 30))
    occlusion.write_projected_csv(pts, tmp_path / "p.csv")
    back = occlusion.read_projected_csv(tmp_path / "p.csv")
    assert np.array_equal(back.pixels, pts.pixels) and np.array_equal(back.ranges, pts.ranges)
    assert np.array_equal(back.points, pts.points)
    stack = build_layer_stack(pts, LayerConfig(), (20, 20))
    paths = occlusion.write_layer_images(stack, tmp_path / "layers")
    assert len(paths) == 12 and paths[0].read_bytes().startswith(b"P5\n")
    assert (stack.dilated >= stack.raw).all()
