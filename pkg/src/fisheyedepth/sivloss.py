"""Scale-invariant log-depth loss restricted to valid ground-truth pixels.

With ``d_i = log p_i - log p*_i`` over the valid set ``V`` (``n = |V|``):

* ``loss_linear``          -- ``(1/n) sum d_i^2 - (1/n^2) (sum d_i)^2``, O(n)
* ``loss_alpha_oracle``    -- ``(1/n) sum (d_i + alpha)^2`` with ``alpha = -mean(d)``
* ``loss_pairwise_oracle`` -- ``(1/(2 n^2)) sum_{i,j} ((log p_i - log p_j) - (log p*_i - log p*_j))^2``, O(n^2)

All three equal the variance of ``d`` over ``V``. The pairwise form carries the
``1/(2 n^2)`` coefficient; with ``1/n^2`` it would be exactly twice the others.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .depthmap import SparseDepthMap

MIN_DEPTH = 1e-6


@dataclass(frozen=True)
class DepthPair:
    """Prediction and sparse ground truth reduced to their valid pixels.

    ``pred`` and ``gt`` hold only the valid entries (row-major order of the
    mask); ``mask`` and ``shape`` map them back to the image.
    """

    pred: np.ndarray
    gt: np.ndarray
    mask: np.ndarray
    clamped: int = 0

    @classmethod
    def from_arrays(cls, pred, gt, mask=None):
        """Build from a dense prediction and either a :class:`SparseDepthMap` or a depth array + mask.

        Without a mask, ground-truth pixels that are finite and positive are valid.
        Depths are clamped to ``MIN_DEPTH`` before taking logs; the number of
        clamped valid values is kept in ``clamped``.
        """
        pred = np.asarray(pred, dtype=np.float64)
        if isinstance(gt, SparseDepthMap):
            if mask is not None:
                raise ValueError("mask is implied by the SparseDepthMap")
            mask, gt = gt.valid, gt.depth
        gt = np.asarray(gt, dtype=np.float64)
        if mask is None:
            mask = np.isfinite(gt) & (gt > 0)
        mask = np.asarray(mask, dtype=bool)
        if pred.shape != gt.shape or mask.shape != gt.shape:
            raise ValueError(f"shape mismatch: pred {pred.shape}, gt {gt.shape}, mask {mask.shape}")
        p, g = pred[mask], gt[mask]
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(g))):
            raise ValueError("non-finite depth on a valid pixel")
        low = (p < MIN_DEPTH) | (g < MIN_DEPTH)
        clamped = int(np.count_nonzero(p < MIN_DEPTH) + np.count_nonzero(g < MIN_DEPTH))
        if low.any():
            p, g = np.maximum(p, MIN_DEPTH), np.maximum(g, MIN_DEPTH)
        return cls(p, g, mask, clamped)

    @classmethod
    def from_log_diff(cls, d):
        """Instance whose log differences are exactly ``d`` (ground truth 1 m everywhere)."""
        d = np.asarray(d, dtype=np.float64).reshape(-1)
        return cls(np.exp(d), np.ones_like(d), np.ones(d.shape, dtype=bool))

    @property
    def n(self):
        return len(self.pred)

    @property
    def shape(self):
        return self.mask.shape

    def log_diff(self):
        if self.pred.shape != self.gt.shape:
            raise ValueError("pred/gt mismatch")
        return np.log(self.pred) - np.log(self.gt)


def _checked(pair: DepthPair):
    if pair.n < 1:
        raise ValueError("no valid pixels: the scale-invariant loss needs n >= 1")
    return pair


def alpha(pair: DepthPair) -> float:
    """Log-offset minimizing the alpha-form loss: ``mean(log p* - log p)``; ``e**alpha`` is the best scale."""
    _checked(pair)
    return float(np.mean(np.log(pair.gt) - np.log(pair.pred)))


def loss_linear(pair: DepthPair) -> float:
    d = _checked(pair).log_diff()
    n = d.size
    s = np.sum(d)
    return float(np.sum(d * d) / n - (s * s) / (n * n))


def loss_alpha_oracle(pair: DepthPair) -> float:
    _checked(pair)
    a = alpha(pair)
    r = np.log(pair.pred) - np.log(pair.gt) + a
    return float(np.mean(r * r))


def loss_pairwise_oracle(pair: DepthPair) -> float:
    _checked(pair)
    lp, lg = np.log(pair.pred), np.log(pair.gt)
    diff = (lp[:, None] - lp[None, :]) - (lg[:, None] - lg[None, :])
    n = pair.n
    return float(np.sum(diff * diff) / (2.0 * n * n))


def loss_gradient(pair: DepthPair, wrt: str = "d", dense: bool = True) -> np.ndarray:
    """Analytic gradient of ``loss_linear``.

    ``wrt="d"`` gives ``dL/dd_i = (2/n) d_i - (2/n^2) sum_j d_j``; ``wrt="pred"``
    chains through ``d_i = log p_i - ...`` (divides by ``p_i``). With ``dense``
    the result is scattered onto the image grid with zeros off the valid set,
    otherwise it is returned compacted in valid-pixel order.
    """
    d = _checked(pair).log_diff()
    n = d.size
    g = (2.0 / n) * d - (2.0 / (n * n)) * np.sum(d)
    if wrt == "pred":
        g = g / pair.pred
    elif wrt != "d":
        raise ValueError("wrt must be 'd' or 'pred'")
    if not dense:
        return g
    out = np.zeros(pair.shape)
    out[pair.mask] = g
    return out


def batch_loss(pairs) -> float:
    """Mean of the per-image losses."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("empty batch")
    return float(np.mean([loss_linear(p) for p in pairs]))
