"""
Diagonalised complex-valued evaluation of a recurrent block.

With ``A = P diag(lam) P^T`` (symmetric GSO, orthogonal ``P``) and ``W = V diag(sigma) V^-1`` the
recurrence decouples per (node-mode, channel-mode) pair:

    Z_{k+1} = sum_{i=0..k} lam^i * (U_hat_{k+1-i} B_hat) * sigma^i,    U_hat = P^T U,  B_hat = B V
    Y       = MLP(Re(P Z_{k+1} W1_hat) + b1),                         W1_hat = V^-1 W1

*Exact* parameters keep ``V`` and ``V^-1`` so the result can be checked against the sequential
block. *Merged* parameters drop them and learn ``sigma``, ``B_hat`` and ``W1_hat`` directly.

For a constant input the sum is a geometric series in ``q = lam * sigma`` and is evaluated in
closed form, so the cost does not depend on ``k``. Otherwise the scaled terms are materialised
along the step axis and reduced with a cumulative sum (flip, scale, cumsum); only the final prefix
is guaranteed to equal the sequential state for time-varying inputs.
"""
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from mpssm.exceptions import DefectiveMatrixError, DimensionError, LinalgError, MemoryBudgetError
from mpssm.linalg import general_eig, sym_eig
from mpssm.models.block import STATIC
from mpssm.models.layers import FROZEN, activation, glorot

log = logging.getLogger(__name__)

DEFAULT_MEMORY_BUDGET = 512 * 2 ** 20
RECONSTRUCTION_TOL = 1e-8
EIGENVALUE_SLACK = 1e-9
WEIGHT_RECONSTRUCTION_TOL = 1e-6
UNIT_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class DiagGso:
    eigenvalues: np.ndarray
    p: np.ndarray
    fingerprint: str

    @property
    def n(self):
        return len(self.eigenvalues)

    def dense(self):
        return (self.p * self.eigenvalues) @ self.p.T


def precompute_gso_eig(gso):
    """
    :param gso: :class:`~mpssm.graphcore.Gso` of an undirected graph
    :rtype: DiagGso
    :raises LinalgError: if the eigenpairs do not reconstruct the GSO
    """
    eigenvalues, p = gso.eig if gso.eig is not None else sym_eig(gso.dense())
    diag = DiagGso(eigenvalues=eigenvalues, p=p, fingerprint=gso.fingerprint)
    a = gso.dense()
    residual = np.linalg.norm(diag.dense() - a)
    if residual > RECONSTRUCTION_TOL * np.linalg.norm(a):
        raise LinalgError("GSO eigenpairs reconstruct with residual {:.3e}".format(residual))
    if np.any(np.abs(eigenvalues) > 1.0 + EIGENVALUE_SLACK):
        raise LinalgError("GSO eigenvalues leave [-1, 1]: {}".format(eigenvalues[[0, -1]]))
    return diag


class DiagCache(object):
    """In-memory :class:`DiagGso` store keyed by graph fingerprint."""

    def __init__(self, entries=()):
        self._entries = {diag.fingerprint: diag for diag in entries}

    def __len__(self):
        return len(self._entries)

    def __contains__(self, fingerprint):
        return fingerprint in self._entries

    def get(self, gso):
        diag = self._entries.get(gso.fingerprint)
        if diag is None:
            log.debug("eigendecomposition cache miss for %s", gso.fingerprint[:12])
            diag = self._entries[gso.fingerprint] = precompute_gso_eig(gso)
        return diag

    def put(self, diag):
        self._entries[diag.fingerprint] = diag

    def values(self):
        return list(self._entries.values())

    def save(self, path):
        from mpssm.api.data import write_diag_cache

        write_diag_cache(path, self.values())

    @classmethod
    def load(cls, path):
        from mpssm.api.data import read_diag_cache

        return cls(read_diag_cache(path))


@dataclass
class FastBlockParams:
    sigma: np.ndarray
    b_hat: np.ndarray
    w1_hat: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    k: int
    activation: str = "relu"
    mode: str = "merged"
    v: np.ndarray = field(default=None, metadata=FROZEN)
    v_inv: np.ndarray = field(default=None, metadata=FROZEN)

    @property
    def c(self):
        return len(self.sigma)


def _complex_glorot(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out) / 2.0)
    shape = (fan_in, fan_out)
    return rng.uniform(-limit, limit, shape) + 1j * rng.uniform(-limit, limit, shape)


def init_merged_params(
    c_in, c, hidden, c_out, r_min=0.9, r_max=0.999, seed=0, k=10, activation="relu", rng=None
):
    """
    Learnable diagonal block: ``sigma = r e^{i theta}`` with ``r ~ U[r_min, r_max]`` and
    ``theta ~ U[0, 2 pi)``, complex Glorot ``B_hat`` and ``W1_hat``, real Glorot ``W2``.
    """
    if not 0.0 < r_min <= r_max <= 1.0:
        raise ValueError("need 0 < r_min <= r_max <= 1, got [{}, {}]".format(r_min, r_max))
    rng = rng if rng is not None else np.random.default_rng(seed)
    radius = rng.uniform(r_min, r_max, c)
    phase = rng.uniform(0.0, 2.0 * np.pi, c)
    return FastBlockParams(
        sigma=radius * np.exp(1j * phase),
        b_hat=_complex_glorot(rng, c_in, c),
        w1_hat=_complex_glorot(rng, c, hidden),
        b1=np.zeros(hidden),
        w2=glorot(rng, hidden, c_out),
        b2=np.zeros(c_out),
        k=k,
        activation=activation,
        mode="merged",
    )


def _diagonalise_weight(w):
    if not np.any(w - np.diag(np.diag(w))):
        c = w.shape[0]
        return np.diag(w).astype(np.complex128), np.eye(c, dtype=np.complex128), np.eye(
            c, dtype=np.complex128)
    if np.allclose(w, w.T, rtol=0.0, atol=1e-12 * max(np.linalg.norm(w), 1.0)):
        eigenvalues, v = sym_eig(w)
        return eigenvalues.astype(np.complex128), v.astype(np.complex128), v.T.astype(np.complex128)
    return general_eig(w)


def to_exact_fast(params):
    """
    :param params: sequential :class:`~mpssm.models.block.BlockParams`
    :return: exact-mode :class:`FastBlockParams` with ``B_hat = B V`` and ``W1_hat = V^-1 W1``
    :raises DefectiveMatrixError: if ``W`` cannot be diagonalised reliably
    """
    params.validate()
    sigma, v, v_inv = _diagonalise_weight(params.w)
    residual = np.linalg.norm((v * sigma) @ v_inv - params.w)
    if residual > WEIGHT_RECONSTRUCTION_TOL * max(np.linalg.norm(params.w), UNIT_TOL):
        raise DefectiveMatrixError("W reconstructs with residual {:.3e}".format(residual))
    return FastBlockParams(
        sigma=sigma,
        b_hat=params.b @ v,
        w1_hat=v_inv @ params.mlp.w1,
        b1=params.mlp.b1.copy(),
        w2=params.mlp.w2.copy(),
        b2=params.mlp.b2.copy(),
        k=params.k,
        activation=params.mlp.activation,
        mode="exact",
        v=v,
        v_inv=v_inv,
    )


def to_merged(params):
    return replace(params, mode="merged", v=None, v_inv=None)


def geometric_sum(q, k):
    """``sum_{i=0..k} q^i`` elementwise."""
    q = np.asarray(q, dtype=np.complex128)
    near_one = np.abs(1.0 - q) < UNIT_TOL
    safe = np.where(near_one, 0.5, q)
    closed = (1.0 - safe ** (k + 1)) / (1.0 - safe)
    series = (k + 1) + 0.5 * k * (k + 1) * (q - 1.0)
    return np.where(near_one, series, closed)


def geometric_sum_grad(q, k):
    """``d/dq sum_{i=0..k} q^i = sum_{i=1..k} i q^(i-1)`` elementwise."""
    q = np.asarray(q, dtype=np.complex128)
    i = np.arange(1, k + 1)
    return (i * q[..., None] ** (i - 1)).sum(axis=-1)


@dataclass(eq=False)
class FastCache:
    u_hat: np.ndarray
    m: np.ndarray
    q: np.ndarray
    s: np.ndarray
    x: np.ndarray
    pre: np.ndarray
    hidden: np.ndarray


def _check(diag, params, sequence):
    n, c_in = sequence.shape
    if n != diag.n:
        raise DimensionError("features have {} rows, graph has {} nodes".format(n, diag.n))
    if c_in != params.b_hat.shape[0]:
        raise DimensionError("features have {} channels, B_hat expects {}".format(
            c_in, params.b_hat.shape[0]))
    if sequence.k != params.k:
        raise DimensionError("sequence has k={}, block expects k={}".format(sequence.k, params.k))


def _scan(diag, params, sequence, memory_budget):
    k, n, c = params.k, diag.n, params.c
    needed = (k + 1) * n * c * np.dtype(np.complex128).itemsize
    if needed > memory_budget:
        raise MemoryBudgetError(
            "parallel scan needs {:.1f} MiB for k={}, n={}, c={} (budget {:.1f} MiB); "
            "use the sequential implementation".format(
                needed / 2 ** 20, k, n, c, memory_budget / 2 ** 20)
        )
    u_hat = np.matmul(diag.p.T, np.stack(sequence.steps))
    flipped = u_hat[::-1] @ params.b_hat
    steps = np.arange(k + 1)[:, None]
    lam_pow = diag.eigenvalues[None, :] ** steps
    sigma_pow = params.sigma[None, :] ** steps
    terms = lam_pow[:, :, None] * flipped * sigma_pow[:, None, :]
    return np.cumsum(terms, axis=0)


def fast_forward(
    diag, params, sequence, return_states=False, memory_budget=DEFAULT_MEMORY_BUDGET, cache=None
):
    """
    :param diag: :class:`DiagGso` of the graph
    :param params: :class:`FastBlockParams`
    :param sequence: :class:`~mpssm.models.block.NodeSequence`
    :param return_states: also return one state per cumulative prefix; real states
        ``Re(P Z_t V^-1)`` in exact mode, complex ``P Z_t`` in merged mode
    :param memory_budget: bytes the step-axis scan may allocate
    :param cache: optional dict receiving the intermediates needed by :func:`fast_backward`
    :return: the decoded final step, or ``(output, states)`` with ``return_states``
    :raises MemoryBudgetError: if the scan does not fit in ``memory_budget``
    """
    _check(diag, params, sequence)
    p = diag.p
    if sequence.mode == STATIC and not return_states:
        u_hat = p.T @ sequence.steps[0]
        m = u_hat @ params.b_hat
        q = diag.eigenvalues[:, None] * params.sigma[None, :]
        s = geometric_sum(q, params.k)
        z = s * m
        prefixes = None
    else:
        prefixes = _scan(diag, params, sequence, memory_budget)
        z = prefixes[-1]
        u_hat = m = q = s = None

    x = p @ z
    phi, _ = activation(params.activation)
    pre = (x @ params.w1_hat).real + params.b1
    hidden = phi(pre)
    output = hidden @ params.w2 + params.b2
    if cache is not None:
        cache["fast"] = FastCache(u_hat, m, q, s, x, pre, hidden)

    if not return_states:
        return output
    if params.mode == "exact":
        states = [(p @ prefix @ params.v_inv).real for prefix in prefixes]
    else:
        states = [p @ prefix for prefix in prefixes]
    return output, states


def fast_backward(diag, params, cache, g_out):
    """
    Reverse pass of the static closed-form :func:`fast_forward`.

    Complex parameters get ``dL/dRe + i dL/dIm``, i.e. their real and imaginary parts are treated
    as independent real parameters.

    :return: ``(input gradient, parameter gradients by name)``
    """
    if cache.s is None:
        raise ValueError("fast_backward needs the static closed-form forward cache")
    _, phi_grad = activation(params.activation)
    g_pre = (g_out @ params.w2.T) * phi_grad(cache.pre)
    grads = {
        "w2": cache.hidden.T @ g_out,
        "b2": g_out.sum(axis=0),
        "b1": g_pre.sum(axis=0),
        "w1_hat": cache.x.conj().T @ g_pre,
    }
    g_z = diag.p.T @ (g_pre @ params.w1_hat.conj().T)
    g_m = np.conj(cache.s) * g_z
    ds_dq = geometric_sum_grad(cache.q, params.k)
    g_s = np.conj(cache.m) * g_z
    grads["sigma"] = (np.conj(diag.eigenvalues[:, None] * ds_dq) * g_s).sum(axis=0)
    grads["b_hat"] = cache.u_hat.T @ g_m
    g_u = diag.p @ (g_m @ params.b_hat.conj().T).real
    return g_u, grads
