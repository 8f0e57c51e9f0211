"""Hot-loop kernels with a compiled backend and a numpy fallback.

The Cython extension ``_ckernels`` is used when it was built; otherwise (or
when ``FISHEYEDEPTH_PURE_PYTHON`` is set to a non-empty value) the numpy
implementations in ``_pykernels`` are used. Both produce identical results;
the wrappers here only normalize dtypes and check shapes.
"""
import logging
import os

import numpy as np

from . import _pykernels

logger = logging.getLogger(__name__)

try:
    if os.environ.get("FISHEYEDEPTH_PURE_PYTHON"):
        raise ImportError("pure-python backend forced by environment")
    from . import _ckernels
except ImportError:
    _ckernels = None

BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    BACKENDS["cython"] = _ckernels

BACKEND = "cython" if _ckernels is not None else "python"
_impl = BACKENDS[BACKEND]
logger.debug("fisheyedepth kernels backend: %s", BACKEND)


def _backend(name):
    if name is None:
        return _impl
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} is not available (have {sorted(BACKENDS)})") from None


def _f64(a, ndim):
    a = np.ascontiguousarray(a, dtype=np.float64)
    if a.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got shape {a.shape}")
    return a


def _i64(a):
    return np.ascontiguousarray(a, dtype=np.int64).reshape(-1)


def ray_cast(origins, dirs, tmax=np.inf, ground_z=None, box_min=None, box_max=None,
             sph_center=None, sph_radius=None, tmin=1e-9, backend=None):
    """Distance to the nearest primitive hit along each ray.

    ``origins`` may be a single 3-vector shared by all rays. Returns ``inf``
    for rays that hit nothing within ``(tmin, tmax]``. Distances are in units
    of the direction vectors' length (meters for unit directions).
    """
    dirs = _f64(dirs, 2)
    n = dirs.shape[0]
    origins = np.asarray(origins, dtype=np.float64)
    if origins.ndim == 1:
        origins = np.broadcast_to(origins, (n, 3))
    origins = _f64(origins, 2)
    tmax = _f64(np.broadcast_to(np.asarray(tmax, dtype=np.float64), (n,)), 1)
    box_min = _f64(np.zeros((0, 3)) if box_min is None else np.reshape(box_min, (-1, 3)), 2)
    box_max = _f64(np.zeros((0, 3)) if box_max is None else np.reshape(box_max, (-1, 3)), 2)
    sph_center = _f64(np.zeros((0, 3)) if sph_center is None else np.reshape(sph_center, (-1, 3)), 2)
    sph_radius = _f64(np.zeros(0) if sph_radius is None else np.reshape(sph_radius, (-1,)), 1)
    gz = float("nan") if ground_z is None else float(ground_z)
    return _backend(backend).ray_cast(
        origins, dirs, tmax, gz, box_min, box_max, sph_center, sph_radius, float(tmin)
    )


def zbuffer_min(cols, rows, values, width, height, backend=None):
    """Scatter ``values`` into an ``(height, width)`` grid keeping the minimum per cell.

    Untouched cells hold ``inf``.
    """
    cols, rows = _i64(cols), _i64(rows)
    values = _f64(np.reshape(values, -1), 1)
    return _backend(backend).zbuffer_min(cols, rows, values, int(width), int(height))


def dilate_square(grid, radius, backend=None):
    grid = np.ascontiguousarray(grid, dtype=np.uint8)
    if grid.ndim != 2:
        raise ValueError(f"expected a 2-d grid, got shape {grid.shape}")
    if radius < 0:
        raise ValueError("dilation radius must be >= 0")
    return _backend(backend).dilate_square(grid, int(radius))


def occluded_mask(cols, rows, ranges, layers, dilated, layer_dist, margin, backend=None):
    dilated = np.ascontiguousarray(dilated, dtype=np.uint8)
    return _backend(backend).occluded_mask(
        _i64(cols), _i64(rows), _f64(np.reshape(ranges, -1), 1), _i64(layers),
        dilated, _f64(layer_dist, 1), float(margin),
    )
