"""Depth evaluation under a ground-truth cap.

Standard monocular-depth definitions, over pixels kept by the cap policy:

    rmse      sqrt(mean((p - g)^2))
    rmse_log  sqrt(mean((log p - log g)^2))
    ard       mean(|p - g| / g)
    srd       mean((p - g)^2 / g)
    delta_k   fraction with max(p/g, g/p) < 1.25^k
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .depthmap import SparseDepthMap


class EmptyEvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class CapPolicy:
    min_cap: float = 0.0
    max_cap: float = 50.0
    log_eps: float = 1e-3

    def __post_init__(self):
        if not 0 <= self.min_cap < self.max_cap:
            raise ValueError("cap policy needs 0 <= min_cap < max_cap")
        if not self.log_eps > 0:
            raise ValueError("log_eps must be positive")


@dataclass(frozen=True)
class CappedSamples:
    pred: np.ndarray
    gt: np.ndarray
    floored: int

    @property
    def count(self):
        return len(self.gt)

    @property
    def empty(self):
        return self.count == 0


def _as_map(x):
    if isinstance(x, SparseDepthMap):
        return x.depth, x.valid
    x = np.asarray(x, dtype=np.float64)
    return x, np.isfinite(x) & (x > 0)


def apply_cap(pred, gt, policy: CapPolicy = CapPolicy()) -> CappedSamples:
    """Keep valid gt pixels with ``min_cap < gt <= max_cap``; clamp predictions into the cap range.

    Predictions are clamped to ``[max(min_cap, log_eps), max_cap]``. Ground truth
    below ``log_eps`` is floored there for the log metrics; ``floored`` counts
    floored values of either kind.
    """
    pred = pred.depth if isinstance(pred, SparseDepthMap) else np.asarray(pred, dtype=np.float64)
    g, valid = _as_map(gt)
    if pred.shape != g.shape:
        raise ValueError(f"dimension mismatch: pred {pred.shape} vs gt {g.shape}")
    keep = valid & (g > policy.min_cap) & (g <= policy.max_cap)
    p = pred[keep]
    g = g[keep]
    lo = max(policy.min_cap, policy.log_eps)
    with np.errstate(invalid="ignore"):
        floored = int(np.count_nonzero(~(p >= lo)) + np.count_nonzero(g < policy.log_eps))
    p = np.clip(np.nan_to_num(p, nan=lo), lo, policy.max_cap)
    g = np.maximum(g, policy.log_eps)
    return CappedSamples(p, g, floored)


@dataclass
class MetricsAccumulator:
    """Running sums so disjoint pixel sets can be evaluated separately and merged."""

    count: int = 0
    sq_err: float = 0.0
    sq_log_err: float = 0.0
    abs_rel: float = 0.0
    sq_rel: float = 0.0
    within1: int = 0
    within2: int = 0
    within3: int = 0
    floored: int = 0

    def add(self, samples: CappedSamples):
        p, g = samples.pred, samples.gt
        diff = p - g
        ldiff = np.log(p) - np.log(g)
        ratio = np.maximum(p / g, g / p)
        self.count += samples.count
        self.sq_err += float(np.sum(diff * diff))
        self.sq_log_err += float(np.sum(ldiff * ldiff))
        self.abs_rel += float(np.sum(np.abs(diff) / g))
        self.sq_rel += float(np.sum(diff * diff / g))
        self.within1 += int(np.count_nonzero(ratio < 1.25))
        self.within2 += int(np.count_nonzero(ratio < 1.25 ** 2))
        self.within3 += int(np.count_nonzero(ratio < 1.25 ** 3))
        self.floored += samples.floored
        return self

    def merge(self, other: "MetricsAccumulator"):
        for k, v in asdict(other).items():
            setattr(self, k, getattr(self, k) + v)
        return self

    def report(self) -> "MetricsReport":
        if self.count == 0:
            raise EmptyEvaluationError("no ground-truth pixels left after capping")
        n = self.count
        return MetricsReport(
            rmse=float(np.sqrt(self.sq_err / n)),
            rmse_log=float(np.sqrt(self.sq_log_err / n)),
            ard=self.abs_rel / n,
            srd=self.sq_rel / n,
            delta1=self.within1 / n,
            delta2=self.within2 / n,
            delta3=self.within3 / n,
            count=n,
            floored=self.floored,
        )


@dataclass(frozen=True)
class MetricsReport:
    rmse: float
    rmse_log: float
    ard: float
    srd: float
    delta1: float
    delta2: float
    delta3: float
    count: int
    floored: int = 0

    def to_dict(self):
        return asdict(self)

    def to_text(self):
        return "".join(f"{k}: {v}\n" for k, v in self.to_dict().items())

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2) + "\n"


def evaluate(pred, gt, policy: CapPolicy = CapPolicy()) -> MetricsReport:
    """Evaluate a prediction against sparse ground truth; raises :class:`EmptyEvaluationError` if nothing survives the cap."""
    return MetricsAccumulator().add(apply_cap(pred, gt, policy)).report()
