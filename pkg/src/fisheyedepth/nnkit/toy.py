"""Per-pixel MLP trained end-to-end on the sparse scale-invariant loss.

A desk-scale stand-in for the convolutional network: the model maps a few
hand-crafted pixel features to log depth, the loss and its gradient come from
:mod:`fisheyedepth.sivloss`, and the parameters are updated with Adam.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import sivloss
from ..depthmap import SparseDepthMap
from ..geometry import FisheyeIntrinsics
from .activations import ActivationParams, swish_beta, swish_beta_grad
from .optim import AdamConfig, AdamState, adam_step, lr_schedule


def pixel_features(shape, intrinsics: FisheyeIntrinsics | None = None, valid=None, window: int = 2):
    """``(H, W, F)`` features: normalized column and row, incidence angle, local valid fraction.

    The incidence angle needs ``intrinsics`` (pixel centers are measured in that
    camera's coordinates, so pass intrinsics matching ``shape``) and the valid
    fraction needs a ``valid`` mask; missing inputs drop the feature.
    """
    h, w = shape
    rows, cols = np.mgrid[0:h, 0:w].astype(np.float64)
    feats = [2.0 * (cols + 0.5) / w - 1.0, 2.0 * (rows + 0.5) / h - 1.0]
    if intrinsics is not None:
        r = np.hypot(cols + 0.5 - intrinsics.cx, rows + 0.5 - intrinsics.cy)
        theta = intrinsics.incidence_angle(np.minimum(r, intrinsics.r_max))
        feats.append(theta / intrinsics.theta_max)
    if valid is not None:
        v = np.asarray(valid, dtype=np.float64)
        k = 2 * window + 1
        pad = np.pad(v, window)
        c = pad.cumsum(0).cumsum(1)
        c = np.pad(c, ((1, 0), (1, 0)))
        box = c[k:, k:] - c[:-k, k:] - c[k:, :-k] + c[:-k, :-k]
        feats.append(box / (k * k))
    return np.stack(feats, axis=-1)


@dataclass(frozen=True)
class ToyModel:
    """One hidden layer: ``out = w2 . act(X @ W1 + b1) + b2`` predicting log depth."""

    n_features: int
    hidden: int
    activation: ActivationParams = field(default_factory=ActivationParams)

    @property
    def n_params(self):
        return self.n_features * self.hidden + 2 * self.hidden + 1

    def unpack(self, theta):
        f, hdim = self.n_features, self.hidden
        i = f * hdim
        w1 = theta[:i].reshape(f, hdim)
        b1 = theta[i:i + hdim]
        w2 = theta[i + hdim:i + 2 * hdim]
        b2 = theta[i + 2 * hdim]
        return w1, b1, w2, b2

    def init_params(self, rng: np.random.Generator, log_depth_bias: float = 0.0):
        theta = np.zeros(self.n_params)
        w1, b1, w2, _ = self.unpack(theta)
        w1[:] = rng.normal(0.0, 1.0 / np.sqrt(self.n_features), w1.shape)
        b1[:] = rng.normal(0.0, 0.1, b1.shape)
        w2[:] = rng.normal(0.0, 1.0 / np.sqrt(self.hidden), w2.shape)
        theta[-1] = log_depth_bias
        return theta

    def forward(self, theta, x):
        w1, b1, w2, b2 = self.unpack(theta)
        z = x @ w1 + b1
        return swish_beta(z, self.activation) @ w2 + b2

    def backward(self, theta, x, grad_out):
        """Gradient of ``sum(grad_out * forward(theta, x))`` with respect to ``theta``."""
        w1, b1, w2, _ = self.unpack(theta)
        z = x @ w1 + b1
        a = swish_beta(z, self.activation)
        g_w2 = a.T @ grad_out
        g_b2 = np.sum(grad_out)
        g_z = np.outer(grad_out, w2) * swish_beta_grad(z, self.activation)
        g_w1 = x.T @ g_z
        g_b1 = g_z.sum(axis=0)
        return np.concatenate([g_w1.ravel(), g_b1, g_w2, [g_b2]])


@dataclass(frozen=True)
class TrainingPair:
    """Features of the valid pixels plus their ground-truth depths."""

    x: np.ndarray
    gt: np.ndarray

    @classmethod
    def from_map(cls, features, gt: SparseDepthMap):
        features = np.asarray(features, dtype=np.float64)
        if features.shape[:2] != gt.valid.shape:
            raise ValueError("feature map and ground truth differ in size")
        return cls(features[gt.valid], gt.depth[gt.valid])


def _image_loss_grad(model, theta, pair: TrainingPair):
    out = model.forward(theta, pair.x)
    dp = sivloss.DepthPair(np.exp(out), pair.gt, np.ones(len(pair.gt), dtype=bool))
    # log(exp(out)) == out, so dL/dout is the loss gradient with respect to d
    g_out = sivloss.loss_gradient(dp, wrt="d", dense=False)
    return sivloss.loss_linear(dp), model.backward(theta, pair.x, g_out)


def objective(model: ToyModel, theta, pairs):
    """Batch loss (mean over images) and its gradient with respect to the parameters."""
    losses, grads = zip(*(_image_loss_grad(model, theta, p) for p in pairs))
    return float(np.mean(losses)), np.mean(grads, axis=0)


@dataclass
class TrainResult:
    model: ToyModel
    params: np.ndarray
    history: list  # (step, lr, loss) before each update, plus the final loss

    @property
    def losses(self):
        return np.array([h[2] for h in self.history])

    def history_csv(self):
        return "step,lr,loss\n" + "".join(f"{s},{lr!r},{loss!r}\n" for s, lr, loss in self.history)


def train_toy(data, model: ToyModel | None = None, steps: int = 2000, seed: int = 0,
              adam: AdamConfig = AdamConfig(), hidden: int = 8) -> TrainResult:
    """Full-batch Adam on the mean scale-invariant loss.

    ``data`` is a sequence of :class:`TrainingPair` or ``(features, SparseDepthMap)``
    tuples. Deterministic given ``seed``.
    """
    pairs = [p if isinstance(p, TrainingPair) else TrainingPair.from_map(*p) for p in data]
    if not pairs:
        raise ValueError("no training data")
    if any(len(p.gt) == 0 for p in pairs):
        raise ValueError("degenerate training data: a ground-truth map has no valid pixels")
    if model is None:
        model = ToyModel(pairs[0].x.shape[1], hidden)
    rng = np.random.default_rng(seed)
    bias = float(np.mean(np.concatenate([np.log(p.gt) for p in pairs])))
    state = AdamState.init(model.init_params(rng, bias))
    history = []
    for step in range(steps):
        loss, grad = objective(model, state.params, pairs)
        history.append((step, lr_schedule(step, adam), loss))
        state = adam_step(state, grad, adam)
    loss, _ = objective(model, state.params, pairs)
    history.append((steps, lr_schedule(steps, adam), loss))
    return TrainResult(model, state.params, history)
