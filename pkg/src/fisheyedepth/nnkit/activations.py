"""Activation functions with analytic derivatives.

``swish`` is ``x * sigmoid(x)``; ``swish_beta`` is the stretched form
``2 * x * sigmoid(beta * x)``, which is the identity at ``beta = 0`` and tends
to ``2 * max(0, x)`` as ``beta`` grows.
"""
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

SELU_ALPHA = 1.6732632423543772
SELU_SCALE = 1.0507009873554805


@dataclass(frozen=True)
class ActivationParams:
    beta: float = 1.0

    def __post_init__(self):
        if not np.isfinite(self.beta):
            raise ValueError("beta must be finite")


def sigmoid(x):
    return expit(x)


def swish(x):
    x = np.asarray(x, dtype=np.float64)
    return x * expit(x)


def swish_grad(x):
    x = np.asarray(x, dtype=np.float64)
    s = expit(x)
    return s + x * s * (1.0 - s)


def swish_beta(x, params: ActivationParams = ActivationParams()):
    x = np.asarray(x, dtype=np.float64)
    return 2.0 * x * expit(params.beta * x)


def swish_beta_grad(x, params: ActivationParams = ActivationParams()):
    x = np.asarray(x, dtype=np.float64)
    b = params.beta
    s = expit(b * x)
    return 2.0 * (s + b * x * s * (1.0 - s))


def relu(x):
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def relu_grad(x):
    return (np.asarray(x) > 0).astype(np.float64)


def leaky_relu(x, slope=0.01):
    x = np.asarray(x, dtype=np.float64)
    return np.where(x > 0, x, slope * x)


def leaky_relu_grad(x, slope=0.01):
    return np.where(np.asarray(x) > 0, 1.0, slope)


def elu(x, a=1.0):
    x = np.asarray(x, dtype=np.float64)
    return np.where(x > 0, x, a * np.expm1(np.minimum(x, 0.0)))


def elu_grad(x, a=1.0):
    x = np.asarray(x, dtype=np.float64)
    return np.where(x > 0, 1.0, a * np.exp(np.minimum(x, 0.0)))


def selu(x):
    return SELU_SCALE * elu(x, SELU_ALPHA)


def selu_grad(x):
    return SELU_SCALE * elu_grad(x, SELU_ALPHA)


# name -> (f, f')
ACTIVATIONS = {
    "swish": (swish, swish_grad),
    "relu": (relu, relu_grad),
    "leaky_relu": (leaky_relu, leaky_relu_grad),
    "elu": (elu, elu_grad),
    "selu": (selu, selu_grad),
}
