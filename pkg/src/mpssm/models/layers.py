"""
Dense building blocks shared by every model variant, each with a forward that returns a cache and
a backward that consumes it.
"""
from dataclasses import dataclass, fields, is_dataclass

import numpy as np
from scipy.special import erf

from mpssm.exceptions import DimensionError

FROZEN = {"trainable": False}
LAYER_NORM_EPS = 1e-5


def _relu(x):
    return np.maximum(x, 0.0)


def _relu_grad(x):
    return (x > 0).astype(x.dtype)


def _gelu(x):
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


def _gelu_grad(x):
    return 0.5 * (1.0 + erf(x / np.sqrt(2.0))) + x * np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)


def _tanh_grad(x):
    return 1.0 - np.tanh(x) ** 2


ACTIVATIONS = {
    "relu": (_relu, _relu_grad),
    "gelu": (_gelu, _gelu_grad),
    "tanh": (np.tanh, _tanh_grad),
    "identity": (lambda x: x, np.ones_like),
}


def activation(name):
    """:return: ``(function, derivative)`` for an activation name"""
    try:
        return ACTIVATIONS[name]
    except KeyError:
        raise ValueError("unknown activation {!r}; expected one of {}".format(
            name, sorted(ACTIVATIONS)))


def glorot(rng, fan_in, fan_out, shape=None):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out))


def check_features(x, expected, what):
    if x.ndim != 2 or x.shape[1] != expected:
        raise DimensionError("{} expects (n, {}) features, got {}".format(what, expected, x.shape))


# --- Parameter containers ---


@dataclass
class Affine:
    w: np.ndarray
    b: np.ndarray

    @classmethod
    def init(cls, rng, c_in, c_out):
        return cls(glorot(rng, c_in, c_out), np.zeros(c_out))

    def forward(self, x):
        check_features(x, self.w.shape[0], "affine layer")
        return x @ self.w + self.b, x

    def backward(self, g, cache):
        x = cache
        return g @ self.w.T, {"w": x.T @ g, "b": g.sum(axis=0)}


@dataclass
class Mlp:
    """Two dense layers with an elementwise activation in between."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    activation: str = "relu"

    @classmethod
    def init(cls, rng, c_in, hidden, c_out, activation="relu"):
        return cls(
            glorot(rng, c_in, hidden), np.zeros(hidden),
            glorot(rng, hidden, c_out), np.zeros(c_out),
            activation,
        )

    @classmethod
    def identity(cls, c, activation="relu"):
        return cls(np.eye(c), np.zeros(c), np.eye(c), np.zeros(c), activation)

    def forward(self, x):
        check_features(x, self.w1.shape[0], "MLP")
        phi, _ = activation(self.activation)
        pre = x @ self.w1 + self.b1
        hidden = phi(pre)
        return hidden @ self.w2 + self.b2, (x, pre, hidden)

    def backward(self, g, cache):
        x, pre, hidden = cache
        _, phi_grad = activation(self.activation)
        g_pre = (g @ self.w2.T) * phi_grad(pre)
        grads = {
            "w1": x.T @ g_pre,
            "b1": g_pre.sum(axis=0),
            "w2": hidden.T @ g,
            "b2": g.sum(axis=0),
        }
        return g_pre @ self.w1.T, grads


@dataclass
class LayerNorm:
    """Normalisation over the channel axis with a learned scale and shift."""

    gamma: np.ndarray
    beta: np.ndarray
    eps: float = LAYER_NORM_EPS

    @classmethod
    def init(cls, c):
        return cls(np.ones(c), np.zeros(c))

    def forward(self, x):
        mean = x.mean(axis=1, keepdims=True)
        inv_std = 1.0 / np.sqrt(x.var(axis=1, keepdims=True) + self.eps)
        x_hat = (x - mean) * inv_std
        return self.gamma * x_hat + self.beta, (x_hat, inv_std)

    def backward(self, g, cache):
        x_hat, inv_std = cache
        c = x_hat.shape[1]
        g_hat = g * self.gamma
        g_x = (inv_std / c) * (
            c * g_hat
            - g_hat.sum(axis=1, keepdims=True)
            - x_hat * (g_hat * x_hat).sum(axis=1, keepdims=True)
        )
        return g_x, {"gamma": (g * x_hat).sum(axis=0), "beta": g.sum(axis=0)}


def dropout_mask(rng, shape, rate):
    """Inverted-dropout mask; ``None`` when nothing is dropped."""
    if not 0.0 <= rate < 1.0:
        raise ValueError("dropout must lie in [0, 1), got {}".format(rate))
    if rate == 0.0:
        return None
    if rng is None:
        raise ValueError("dropout in train mode needs an explicit rng")
    return (rng.random(shape) >= rate) / (1.0 - rate)


# --- Parameter walking ---


def named_arrays(obj, prefix=""):
    """
    Walk nested parameter dataclasses and lists, yielding ``(dotted name, array)`` for every
    trainable ndarray field. Fields declared with ``metadata=FROZEN`` are skipped.

    The yielded arrays are the live parameter storage, so in-place updates reach the model.
    """
    if isinstance(obj, np.ndarray):
        yield prefix, obj
    elif isinstance(obj, (list, tuple)):
        for index, item in enumerate(obj):
            yield from named_arrays(item, "{}{}".format(prefix + "." if prefix else "", index))
    elif is_dataclass(obj):
        for f in fields(obj):
            if not f.metadata.get("trainable", True):
                continue
            name = "{}.{}".format(prefix, f.name) if prefix else f.name
            yield from named_arrays(getattr(obj, f.name), name)


def prefixed(prefix, grads):
    return {"{}.{}".format(prefix, name): g for name, g in grads.items()}
