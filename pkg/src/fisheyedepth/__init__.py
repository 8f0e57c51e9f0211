"""LIDAR-supervised fisheye depth: sparse ground truth, occlusion filtering, scale-invariant loss, metrics."""
from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
