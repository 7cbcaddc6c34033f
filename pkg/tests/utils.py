import numpy as np

from mpssm.models.block import BlockParams


def scaled_weight(rng, c, radius=0.9):
    w = rng.standard_normal((c, c)) / np.sqrt(c)
    return w * (radius / np.max(np.abs(np.linalg.eigvals(w))))


def random_block(rng, c_in, c, k, radius=0.9, activation="relu"):
    params = BlockParams.init(rng, c_in, c, c, c, k, activation)
    params.w = scaled_weight(rng, c, radius)
    return params


def central_difference(f, x, h=1e-5):
    """Gradient of the scalar ``f`` at the real array ``x``, one coordinate at a time."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat, out = x.reshape(-1), grad.reshape(-1)
    for index in range(flat.size):
        original = flat[index]
        flat[index] = original + h
        plus = f(x)
        flat[index] = original - h
        minus = f(x)
        flat[index] = original
        out[index] = (plus - minus) / (2.0 * h)
    return grad


def assert_relative(actual, expected, tol):
    actual, expected = np.asarray(actual), np.asarray(expected)
    scale = max(np.linalg.norm(expected), 1e-12)
    assert np.linalg.norm(actual - expected) / scale < tol
