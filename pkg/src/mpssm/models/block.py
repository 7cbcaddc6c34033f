"""
The sequential, real-valued recurrent block and the residual GCN it generalises.

A block runs ``k + 1`` steps of the linear recurrence

    X_{t+1} = A X_t W + U_{t+1} B,    X_0 = 0,    t = 0 .. k

and decodes with a two-layer MLP. Static graphs feed the constant sequence ``[U_1, ..., U_1]`` and
decode only ``X_{k+1}``; temporal graphs feed one input per step and decode every state.
"""
from dataclasses import dataclass

import numpy as np

from mpssm.exceptions import DimensionError
from mpssm.models.layers import Affine, Mlp, activation, glorot, prefixed

STATIC = "static"
TEMPORAL = "temporal"


@dataclass(frozen=True, eq=False)
class NodeSequence:
    steps: tuple
    mode: str

    @property
    def k(self):
        return len(self.steps) - 1

    @property
    def shape(self):
        return self.steps[0].shape


def make_input_sequence(u, k):
    """
    :param u: one ``n x c'`` matrix (static graph) or a list of ``k + 1`` such matrices
        (temporal graph)
    :param k: recurrence depth
    :rtype: NodeSequence
    """
    if int(k) != k or k < 0:
        raise ValueError("recurrence depth must be a non-negative integer, got {}".format(k))
    if isinstance(u, np.ndarray):
        if u.ndim != 2 or u.size == 0:
            raise DimensionError("static input must be a non-empty 2-d array, got {}".format(
                u.shape))
        return NodeSequence(steps=(u,) * (k + 1), mode=STATIC)

    steps = tuple(np.asarray(step) for step in u)
    if not steps:
        raise DimensionError("temporal input is empty")
    if len(steps) != k + 1:
        raise DimensionError("temporal input has {} steps, expected k + 1 = {}".format(
            len(steps), k + 1))
    shapes = {step.shape for step in steps}
    if len(shapes) != 1 or steps[0].ndim != 2:
        raise DimensionError("temporal steps must share one 2-d shape, got {}".format(shapes))
    return NodeSequence(steps=steps, mode=TEMPORAL)


@dataclass
class BlockParams:
    w: np.ndarray
    b: np.ndarray
    mlp: Mlp
    k: int

    @classmethod
    def init(cls, rng, c_in, c, hidden=None, c_out=None, k=10, activation="relu"):
        """Glorot-uniform weights; the MLP hidden width and output width default to ``c``."""
        return cls(
            w=glorot(rng, c, c),
            b=glorot(rng, c_in, c),
            mlp=Mlp.init(rng, c, hidden or c, c_out or c, activation),
            k=k,
        )

    @property
    def c(self):
        return self.w.shape[0]

    def validate(self):
        c = self.c
        if self.w.shape != (c, c) or self.b.ndim != 2 or self.b.shape[1] != c:
            raise DimensionError("inconsistent recurrence weights W{} B{}".format(
                self.w.shape, self.b.shape))
        if self.mlp.w1.shape[0] != c:
            raise DimensionError("MLP input width {} does not match state width {}".format(
                self.mlp.w1.shape[0], c))
        if self.k < 0:
            raise ValueError("recurrence depth must be non-negative")


@dataclass(eq=False)
class BlockResult:
    states: list
    outputs: object
    caches: list


def _check_sequence(gso, params, sequence):
    params.validate()
    n, c_in = sequence.shape
    if sequence.k != params.k:
        raise DimensionError("sequence has k={}, block expects k={}".format(sequence.k, params.k))
    if n != gso.n:
        raise DimensionError("features have {} rows, graph has {} nodes".format(n, gso.n))
    if c_in != params.b.shape[0]:
        raise DimensionError("features have {} channels, B expects {}".format(
            c_in, params.b.shape[0]))


def block_forward(gso, params, sequence):
    """
    :return: :class:`BlockResult` with ``states = [X_0, ..., X_{k+1}]`` and ``outputs`` equal to
        ``MLP(X_{k+1})`` (static) or ``[MLP(X_1), ..., MLP(X_{k+1})]`` (temporal)
    """
    _check_sequence(gso, params, sequence)
    states = [np.zeros((gso.n, params.c))]
    injected = sequence.steps[0] @ params.b if sequence.mode == STATIC else None
    for t in range(params.k + 1):
        u_b = injected if injected is not None else sequence.steps[t] @ params.b
        states.append(gso.shift(states[-1]) @ params.w + u_b)

    if sequence.mode == STATIC:
        output, cache = params.mlp.forward(states[-1])
        return BlockResult(states, output, [cache])
    decoded = [params.mlp.forward(x) for x in states[1:]]
    return BlockResult(states, [y for y, _ in decoded], [cache for _, cache in decoded])


def block_backward(gso, params, sequence, result, g_out):
    """
    Reverse pass of :func:`block_forward`. The state gradient ``delta_t`` flows back as
    ``delta_t = A^T delta_{t+1} W^T``; along the way ``dW += (A X_t)^T delta_{t+1}`` and
    ``dB += U_{t+1}^T delta_{t+1}``.

    :param g_out: gradient of the loss w.r.t. ``outputs`` (an array, or a list in temporal mode)
    :return: ``(input gradient, parameter gradients by name)``; the input gradient is one array for
        static sequences and a list per step for temporal ones
    """
    states = result.states
    k = params.k
    mlp_grads = {}
    state_grads = [None] * (k + 2)
    if sequence.mode == STATIC:
        state_grads[k + 1], mlp_grads = params.mlp.backward(g_out, result.caches[0])
    else:
        for t, (g, cache) in enumerate(zip(g_out, result.caches), start=1):
            state_grads[t], step_grads = params.mlp.backward(g, cache)
            for name, value in step_grads.items():
                mlp_grads[name] = mlp_grads.get(name, 0.0) + value

    g_w = np.zeros_like(params.w)
    g_b = np.zeros_like(params.b)
    g_inputs = [None] * (k + 1)
    delta = np.zeros_like(states[0])
    for t in range(k, -1, -1):
        if state_grads[t + 1] is not None:
            delta = delta + state_grads[t + 1]
        g_w += gso.shift(states[t]).T @ delta
        g_b += sequence.steps[t].T @ delta
        g_inputs[t] = delta @ params.b.T
        delta = gso.shift(delta) @ params.w.T

    grads = {"w": g_w, "b": g_b}
    grads.update(prefixed("mlp", mlp_grads))
    g_input = sum(g_inputs) if sequence.mode == STATIC else g_inputs
    return g_input, grads


def unfolded_state(gso, params, sequence):
    """Closed form ``X_{k+1} = sum_{i=0..k} A^i U_{k+1-i} B W^i`` built from explicit powers."""
    _check_sequence(gso, params, sequence)
    a = gso.dense()
    a_pow = np.eye(gso.n)
    w_pow = np.eye(params.c)
    total = np.zeros((gso.n, params.c))
    for i in range(params.k + 1):
        total += a_pow @ sequence.steps[params.k - i] @ params.b @ w_pow
        a_pow = a @ a_pow
        w_pow = w_pow @ params.w
    return total


def unfolded_forward(gso, params, sequence):
    output, _ = params.mlp.forward(unfolded_state(gso, params, sequence))
    return output


# --- Residual GCN baseline and its linear ablations ---


@dataclass
class GcnParams:
    """
    ``k`` GCN layers ``X_{t+1} = act(A X_t W_t + b_t [+ X_t])``. With ``shared`` one layer is
    reused at every step; an optional MLP decodes the last state.
    """

    layers: list
    k: int
    activation: str = "relu"
    residual: bool = True
    shared: bool = False
    mlp: Mlp = None

    @classmethod
    def init(cls, rng, c, k, activation="relu", residual=True, shared=False, mlp_hidden=None):
        layers = [Affine.init(rng, c, c) for _ in range(1 if shared else k)]
        mlp = Mlp.init(rng, c, mlp_hidden, c) if mlp_hidden else None
        return cls(layers, k, activation, residual, shared, mlp)

    def layer(self, t):
        return self.layers[0 if self.shared else t]

    def validate(self):
        expected = 1 if self.shared else self.k
        if len(self.layers) != expected:
            raise DimensionError("{} layer(s) given, expected {}".format(
                len(self.layers), expected))
        for layer in self.layers:
            if layer.w.shape[0] != layer.w.shape[1]:
                raise DimensionError("GCN layers must be square, got {}".format(layer.w.shape))


@dataclass(eq=False)
class GcnResult:
    states: list
    pre: list
    output: np.ndarray
    mlp_cache: tuple = None


def gcn_forward(gso, params, features):
    """
    :return: :class:`GcnResult` exposing every state ``X_0 .. X_k`` and every pre-activation
    """
    params.validate()
    if features.shape[0] != gso.n:
        raise DimensionError("features have {} rows, graph has {} nodes".format(
            features.shape[0], gso.n))
    if features.shape[1] != params.layers[0].w.shape[0]:
        raise DimensionError("features have {} channels, layers expect {}".format(
            features.shape[1], params.layers[0].w.shape[0]))
    phi, _ = activation(params.activation)
    x = features
    states, pre = [x], []
    for t in range(params.k):
        layer = params.layer(t)
        z = gso.shift(x) @ layer.w + layer.b
        if params.residual:
            z = z + x
        x = phi(z)
        pre.append(z)
        states.append(x)

    if params.mlp is None:
        return GcnResult(states, pre, x)
    output, cache = params.mlp.forward(x)
    return GcnResult(states, pre, output, cache)


def gcn_backward(gso, params, result, g_out):
    _, phi_grad = activation(params.activation)
    grads = {}
    g = g_out
    if params.mlp is not None:
        g, mlp_grads = params.mlp.backward(g_out, result.mlp_cache)
        grads.update(prefixed("mlp", mlp_grads))

    g_w = [np.zeros_like(layer.w) for layer in params.layers]
    g_b = [np.zeros_like(layer.b) for layer in params.layers]
    for t in range(params.k - 1, -1, -1):
        index = 0 if params.shared else t
        g_z = g * phi_grad(result.pre[t])
        g_w[index] += gso.shift(result.states[t]).T @ g_z
        g_b[index] += g_z.sum(axis=0)
        g = gso.shift(g_z) @ params.layers[index].w.T
        if params.residual:
            g = g + g_z

    for index in range(len(params.layers)):
        grads["layers.{}.w".format(index)] = g_w[index]
        grads["layers.{}.b".format(index)] = g_b[index]
    return g, grads
