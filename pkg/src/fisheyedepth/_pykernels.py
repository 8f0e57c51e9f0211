"""Pure numpy implementations of the hot kernels.

Same signatures and semantics as the compiled ``_ckernels`` module. Inputs are
assumed already normalized by :mod:`fisheyedepth.kernels` (contiguous arrays,
float64 coordinates, int64 indices, uint8 grids).
"""
import numpy as np

_CHUNK = 1 << 15


def ray_cast(origins, dirs, tmax, ground_z, box_min, box_max, sph_center, sph_radius, tmin):
    n = dirs.shape[0]
    out = np.empty(n, dtype=np.float64)
    for start in range(0, n, _CHUNK):
        sl = slice(start, min(start + _CHUNK, n))
        out[sl] = _ray_cast_chunk(
            origins[sl], dirs[sl], tmax[sl], ground_z, box_min, box_max, sph_center, sph_radius, tmin
        )
    return out


def _ray_cast_chunk(o, d, tmax, ground_z, box_min, box_max, sph_center, sph_radius, tmin):
    best = np.full(d.shape[0], np.inf)

    if not np.isnan(ground_z):
        dz = d[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (ground_z - o[:, 2]) / dz
        t = np.where((dz != 0.0) & (t > tmin), t, np.inf)
        best = np.minimum(best, t)

    if box_min.shape[0]:
        o3 = o[:, None, :]
        d3 = d[:, None, :]
        lo = box_min[None, :, :]
        hi = box_max[None, :, :]
        parallel = d3 == 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / d3
            t1 = (lo - o3) * inv
            t2 = (hi - o3) * inv
        inside = (o3 >= lo) & (o3 <= hi)
        near_ax = np.where(parallel, np.where(inside, -np.inf, np.inf), np.minimum(t1, t2))
        far_ax = np.where(parallel, np.where(inside, np.inf, -np.inf), np.maximum(t1, t2))
        tnear = near_ax.max(axis=2)
        tfar = far_ax.min(axis=2)
        hit = tnear <= tfar
        t = np.where(tnear > tmin, tnear, np.where(tfar > tmin, tfar, np.inf))
        t = np.where(hit, t, np.inf)
        best = np.minimum(best, t.min(axis=1))

    if sph_center.shape[0]:
        # explicit left-to-right sums keep results bit-identical with the compiled loop
        ocx, ocy, ocz = (o[:, k, None] - sph_center[None, :, k] for k in range(3))
        dx, dy, dz = (d[:, k, None] for k in range(3))
        a = dx * dx + dy * dy + dz * dz
        b = ocx * dx + ocy * dy + ocz * dz
        c = ocx * ocx + ocy * ocy + ocz * ocz - sph_radius[None, :] * sph_radius[None, :]
        disc = b * b - a * c
        root = np.sqrt(np.where(disc >= 0.0, disc, 0.0))
        t_in = (-b - root) / a
        t_out = (-b + root) / a
        t = np.where(t_in > tmin, t_in, np.where(t_out > tmin, t_out, np.inf))
        t = np.where(disc >= 0.0, t, np.inf)
        best = np.minimum(best, t.min(axis=1))

    return np.where(best <= tmax, best, np.inf)


def zbuffer_min(cols, rows, values, width, height):
    out = np.full(height * width, np.inf)
    np.minimum.at(out, rows * width + cols, values)
    return out.reshape(height, width)


def _dilate_axis(grid, radius, axis):
    # sliding-window "any" via prefix sums
    n = grid.shape[axis]
    c = np.cumsum(grid, axis=axis, dtype=np.int64)
    pad_shape = list(grid.shape)
    pad_shape[axis] = 1
    c = np.concatenate([np.zeros(pad_shape, dtype=np.int64), c], axis=axis)
    idx = np.arange(n)
    hi = np.minimum(idx + radius + 1, n)
    lo = np.maximum(idx - radius, 0)
    window = np.take(c, hi, axis=axis) - np.take(c, lo, axis=axis)
    return (window > 0).astype(np.uint8)


def dilate_square(grid, radius):
    if radius == 0:
        return grid.astype(bool)
    out = _dilate_axis(grid, radius, 1)
    return _dilate_axis(out, radius, 0).astype(bool)


def occluded_mask(cols, rows, ranges, layers, dilated, layer_dist, margin):
    n_layers = dilated.shape[0]
    if cols.shape[0] == 0:
        return np.zeros(0, dtype=bool)
    cover = dilated[:, rows, cols].astype(bool)
    nearer = np.arange(n_layers)[:, None] < layers[None, :]
    behind = (ranges[None, :] - layer_dist[:, None]) > margin
    return np.any(cover & nearer & behind, axis=0)
