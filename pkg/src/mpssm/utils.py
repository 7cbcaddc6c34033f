import json
import time
from contextlib import contextmanager
from functools import partial

import numpy as np

MSE_FLOOR = 1e-12


class MpssmJSONEncoder(json.JSONEncoder):
    """Extends the default encoder to add support for numpy scalars and arrays.
    Complex values are written as ``[re, im]`` pairs, so a complex array becomes a nested
    list with one extra trailing axis of length 2.
    """

    def default(self, obj):
        if isinstance(obj, np.ndarray):
            if np.iscomplexobj(obj):
                return np.stack([obj.real, obj.imag], axis=-1).tolist()
            return obj.tolist()
        if isinstance(obj, (complex, np.complexfloating)):
            return [float(obj.real), float(obj.imag)]
        if isinstance(obj, np.integer):
            return int(obj)
        if isinstance(obj, np.floating):
            return float(obj)
        if isinstance(obj, np.bool_):
            return bool(obj)
        return super(MpssmJSONEncoder, self).default(obj)


mpssm_json_serializer = partial(json.dumps, cls=MpssmJSONEncoder)


def complex_from_pairs(data):
    """
    :param data: nested list whose innermost axis holds ``[re, im]`` pairs
    :return: complex128 array with the pair axis folded away
    """
    pairs = np.asarray(data, dtype=np.float64)
    return pairs[..., 0] + 1j * pairs[..., 1]


class Timer(object):
    def __init__(self):
        self.elapsed = 0.0

    @property
    def ms(self):
        return 1000.0 * self.elapsed


@contextmanager
def record_time():
    """Yields a :class:`Timer` whose ``elapsed`` is set (in seconds) when the block exits."""
    timer = Timer()
    start_time = time.perf_counter()
    try:
        yield timer
    finally:
        timer.elapsed = time.perf_counter() - start_time


def derive_seed(seed, *keys):
    """
    Derive an independent 32-bit seed for a sub-task (trial, record, repetition) so that
    results do not depend on the order in which sub-tasks are run.

    :param seed: root seed
    :param keys: non-negative integers identifying the sub-task
    :rtype: int
    """
    sequence = np.random.SeedSequence([int(seed)] + [int(key) for key in keys])
    return int(sequence.generate_state(1)[0])


def log10_mse(mse):
    """log10 of a mean squared error, clamped below at ``log10(MSE_FLOOR) = -12``."""
    return float(np.log10(max(float(mse), MSE_FLOOR)))


def relative_error(actual, expected, floor=1e-12):
    """Frobenius-norm relative error ``|actual - expected| / max(|expected|, floor)``."""
    actual = np.asarray(actual)
    expected = np.asarray(expected)
    return float(np.linalg.norm(actual - expected) / max(np.linalg.norm(expected), floor))
