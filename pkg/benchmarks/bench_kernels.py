"""Time the compiled and numpy kernel backends on demo-sized inputs and check they agree.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import math
import time

import numpy as np

from fisheyedepth import kernels, occlusion, scansim
from fisheyedepth.geometry import FisheyeIntrinsics


def _best(fn, repeat):
    best = math.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def workloads():
    scene = scansim.urban_demo_scene()
    lidar_pose, cam_pose = scansim.default_rig()
    cfg = scansim.LidarConfig(pose=lidar_pose)
    dirs, _ = cfg.ray_directions()
    world_dirs = dirs @ lidar_pose.rotation.T
    boxes_lo = np.array([b.lower for b in scene.boxes])
    boxes_hi = np.array([b.upper for b in scene.boxes])
    centers = np.array([s.center for s in scene.spheres])
    radii = np.array([s.radius for s in scene.spheres])

    frame = scansim.simulate_scan(scene, cfg)
    k = FisheyeIntrinsics(360.0, 640.0, 400.0, 1280, 800, theta_max=math.radians(95))
    pts = occlusion.ProjectedPoints.from_camera_points(
        cam_pose.inverse().apply(lidar_pose.apply(frame.points)), k)
    lc = occlusion.LayerConfig()
    layers = occlusion.assign_layers(pts.ranges, lc.distances)
    raw = np.zeros((lc.count, k.height, k.width), dtype=np.uint8)
    raw[layers, pts.pixels[:, 1], pts.pixels[:, 0]] = 1
    dilated = np.stack([kernels.dilate_square(g, lc.dilation_radius) for g in raw])
    cols, rows = pts.pixels[:, 0], pts.pixels[:, 1]

    return {
        f"ray_cast ({len(world_dirs)} rays)": lambda b: kernels.ray_cast(
            lidar_pose.translation, world_dirs, cfg.max_range, scene.ground_z,
            boxes_lo, boxes_hi, centers, radii, backend=b),
        f"zbuffer_min ({len(pts)} points)": lambda b: kernels.zbuffer_min(
            cols, rows, pts.ranges, k.width, k.height, backend=b),
        f"dilate_square ({lc.count} layers)": lambda b: np.stack(
            [kernels.dilate_square(g, lc.dilation_radius, backend=b) for g in raw]),
        f"occluded_mask ({len(pts)} points)": lambda b: kernels.occluded_mask(
            cols, rows, pts.ranges, layers, dilated, lc.distances, lc.margin, backend=b),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = sorted(kernels.BACKENDS)
    if "cython" not in backends:
        print("compiled backend not built; timing the numpy fallback only")
    print(f"{'kernel':<34}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}  equal")
    for name, fn in workloads().items():
        times, outs = {}, {}
        for b in backends:
            times[b], outs[b] = _best(lambda: fn(b), args.repeat)
        same = all(np.array_equal(outs[b], outs[backends[0]]) for b in backends)
        speed = f"{times['python'] / times['cython']:.1f}x" if "cython" in times else "-"
        print(f"{name:<34}" + "".join(f"{times[b] * 1e3:>10.2f}ms" for b in backends) + f"{speed:>10}  {same}")


if __name__ == "__main__":
    main()
