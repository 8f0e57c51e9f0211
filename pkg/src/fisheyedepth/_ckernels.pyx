# cython: language_level=3
"""Compiled versions of the hot kernels; see ``_pykernels`` for the reference."""
import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY, sqrt, isnan

cnp.import_array()


cdef inline double _box_hit(double ox, double oy, double oz,
                            double dx, double dy, double dz,
                            const double[:, ::1] bmin, const double[:, ::1] bmax,
                            Py_ssize_t b, double tmin) noexcept nogil:
    cdef double tnear = -INFINITY
    cdef double tfar = INFINITY
    cdef double o[3]
    cdef double d[3]
    cdef double t1, t2, tmp, lo, hi
    cdef int ax
    o[0] = ox; o[1] = oy; o[2] = oz
    d[0] = dx; d[1] = dy; d[2] = dz
    for ax in range(3):
        lo = bmin[b, ax]
        hi = bmax[b, ax]
        if d[ax] == 0.0:
            if o[ax] < lo or o[ax] > hi:
                return INFINITY
            continue
        t1 = (lo - o[ax]) * (1.0 / d[ax])
        t2 = (hi - o[ax]) * (1.0 / d[ax])
        if t1 > t2:
            tmp = t1; t1 = t2; t2 = tmp
        if t1 > tnear:
            tnear = t1
        if t2 < tfar:
            tfar = t2
    if tnear > tfar:
        return INFINITY
    if tnear > tmin:
        return tnear
    if tfar > tmin:
        return tfar
    return INFINITY


def ray_cast(const double[:, ::1] origins, const double[:, ::1] dirs, const double[::1] tmax,
             double ground_z, const double[:, ::1] box_min, const double[:, ::1] box_max,
             const double[:, ::1] sph_center, const double[::1] sph_radius, double tmin):
    cdef Py_ssize_t n = dirs.shape[0]
    cdef Py_ssize_t nb = box_min.shape[0]
    cdef Py_ssize_t ns = sph_center.shape[0]
    cdef Py_ssize_t i, j
    cdef double best, t, ox, oy, oz, dx, dy, dz
    cdef double ocx, ocy, ocz, a, bq, c, disc, root, t_in, t_out
    cdef bint has_ground = not isnan(ground_z)
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] res = out
    with nogil:
        for i in range(n):
            ox = origins[i, 0]; oy = origins[i, 1]; oz = origins[i, 2]
            dx = dirs[i, 0]; dy = dirs[i, 1]; dz = dirs[i, 2]
            best = INFINITY
            if has_ground and dz != 0.0:
                t = (ground_z - oz) / dz
                if t > tmin and t < best:
                    best = t
            for j in range(nb):
                t = _box_hit(ox, oy, oz, dx, dy, dz, box_min, box_max, j, tmin)
                if t < best:
                    best = t
            for j in range(ns):
                ocx = ox - sph_center[j, 0]
                ocy = oy - sph_center[j, 1]
                ocz = oz - sph_center[j, 2]
                a = dx * dx + dy * dy + dz * dz
                bq = ocx * dx + ocy * dy + ocz * dz
                c = ocx * ocx + ocy * ocy + ocz * ocz - sph_radius[j] * sph_radius[j]
                disc = bq * bq - a * c
                if disc < 0.0:
                    continue
                root = sqrt(disc)
                t_in = (-bq - root) / a
                t_out = (-bq + root) / a
                if t_in > tmin:
                    t = t_in
                elif t_out > tmin:
                    t = t_out
                else:
                    continue
                if t < best:
                    best = t
            res[i] = best if best <= tmax[i] else INFINITY
    return out


def zbuffer_min(const cnp.int64_t[::1] cols, const cnp.int64_t[::1] rows, const double[::1] values,
                Py_ssize_t width, Py_ssize_t height):
    out = np.full((height, width), np.inf)
    cdef double[:, ::1] buf = out
    cdef Py_ssize_t i, r, c
    cdef Py_ssize_t n = values.shape[0]
    with nogil:
        for i in range(n):
            r = rows[i]
            c = cols[i]
            if values[i] < buf[r, c]:
                buf[r, c] = values[i]
    return out


def dilate_square(const cnp.uint8_t[:, ::1] grid, Py_ssize_t radius):
    cdef Py_ssize_t h = grid.shape[0]
    cdef Py_ssize_t w = grid.shape[1]
    cdef Py_ssize_t r, c, lo, hi, count
    tmp_arr = np.zeros((h, w), dtype=np.uint8)
    out_arr = np.zeros((h, w), dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] tmp = tmp_arr
    cdef cnp.uint8_t[:, ::1] out = out_arr
    with nogil:
        # horizontal pass: running count of set pixels in [c - radius, c + radius]
        for r in range(h):
            count = 0
            for c in range(min(radius, w)):
                count += grid[r, c] != 0
            for c in range(w):
                hi = c + radius
                if hi < w:
                    count += grid[r, hi] != 0
                lo = c - radius - 1
                if lo >= 0:
                    count -= grid[r, lo] != 0
                tmp[r, c] = count > 0
        for c in range(w):
            count = 0
            for r in range(min(radius, h)):
                count += tmp[r, c]
            for r in range(h):
                hi = r + radius
                if hi < h:
                    count += tmp[hi, c]
                lo = r - radius - 1
                if lo >= 0:
                    count -= tmp[lo, c]
                out[r, c] = count > 0
    return out_arr.astype(bool)


def occluded_mask(const cnp.int64_t[::1] cols, const cnp.int64_t[::1] rows, const double[::1] ranges,
                  const cnp.int64_t[::1] layers, const cnp.uint8_t[:, :, ::1] dilated,
                  const double[::1] layer_dist, double margin):
    cdef Py_ssize_t n = ranges.shape[0]
    cdef Py_ssize_t p, i
    out = np.zeros(n, dtype=bool)
    cdef cnp.uint8_t[::1] res = out.view(np.uint8)
    with nogil:
        for p in range(n):
            for i in range(layers[p]):
                if dilated[i, rows[p], cols[p]] and ranges[p] - layer_dist[i] > margin:
                    res[p] = 1
                    break
    return out
