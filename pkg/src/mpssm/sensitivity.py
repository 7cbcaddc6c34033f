"""
Node-to-node sensitivity of the linear recurrence, as executable checks.

For ``X_t = A X_{t-1} W + (input terms)`` the Jacobian between node features is exact:

    dX_t^(i) / dX_s^(j) = (A^D)_ij (W^T)^D,      D = t - s

so the local sensitivity ``S_ij(D)`` (spectral norm of that Jacobian) factors into
``|(A^D)_ij| * |W^D|_2``. The checks here compare that closed form with finite differences,
verify the global lower bound ``max_ij S_ij >= rho(A)^D |W^D| / |V|``, the minimum bound
``2 |W^D| / (|V| + 2|E|)`` and the deep-regime limit

    (A^D)_ij  ->  sqrt((1 + d_i)(1 + d_j)) / (|V| + 2|E|)

whose error decays like ``|lambda_2|^D``.
"""
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from mpssm.exceptions import GraphError
from mpssm.graphcore import bfs_oracle, bridge_nodes, build_gso, clique_chain
from mpssm.linalg import mat_power, spectral_norm
from mpssm.models.block import BlockParams, GcnParams, gcn_forward
from mpssm.models.deep import default_diag_cache
from mpssm.models.layers import Affine, Mlp
from mpssm.utils import derive_seed, relative_error

log = logging.getLogger(__name__)

ALL_PAIRS_LIMIT = 128
GLOBAL_SLACK = 1e-12
# relative; the bound is attained by pairs of degree-1 nodes
MIN_SLACK = 1e-9
DEEP_DELTA = 200
EIGENVALUE_SLACK = 1e-9
FIXED_POINT_TOL = 1e-9
NORM_TOL = 1e-6
CONVERGENCE_TOL = 0.1
DEVIATION_FLOOR = 1e-10
MIN_VANISHING_WIDTH = 32


def _dense(gso):
    return gso.dense()


def exact_jacobian(gso, w, i, j, delta):
    """``(A^delta)_ij * (W^T)^delta``, the Jacobian of ``X_t^(i)`` w.r.t. ``X_s^(j)``."""
    if delta < 0:
        raise ValueError("delta must be non-negative")
    a_ij = mat_power(_dense(gso), delta)[i, j]
    return a_ij * mat_power(np.asarray(w).T, delta)


def _run_recurrence(gso, params, x_s, inputs, s, t):
    x = x_s
    for step in range(s, t):
        x = gso.shift(x) @ params.w + inputs[step + 1] @ params.b
    return x


def finite_diff_jacobian(gso, params, i, j, s, t, h=1e-5, seed=0):
    """
    Central differences of ``X_t^(i)`` with respect to each channel of ``X_s^(j)``, running the
    literal recurrence ``X_{r+1} = A X_r W + U_{r+1} B`` from a random state ``X_s`` with random
    inputs.

    :param params: :class:`~mpssm.models.block.BlockParams` (only ``W`` and ``B`` are used)
    """
    if h <= 0 or t < s:
        raise ValueError("need h > 0 and t >= s")
    rng = np.random.default_rng(seed)
    c = params.c
    x_s = rng.standard_normal((gso.n, c))
    inputs = rng.standard_normal((t + 1, gso.n, params.b.shape[0]))
    jac = np.empty((c, c))
    for b in range(c):
        plus, minus = x_s.copy(), x_s.copy()
        plus[j, b] += h
        minus[j, b] -= h
        diff = (_run_recurrence(gso, params, plus, inputs, s, t)[i]
                - _run_recurrence(gso, params, minus, inputs, s, t)[i])
        jac[:, b] = diff / (2.0 * h)
    return jac


def local_sensitivity(gso, w, i, j, delta):
    """``|(A^delta)_ij| * |W^delta|_2``."""
    a_ij = mat_power(_dense(gso), delta)[i, j]
    return abs(a_ij) * spectral_norm(mat_power(np.asarray(w), delta))


@dataclass(eq=False)
class SensitivityReport:
    delta: int
    s_global: float
    s_min: float
    bound_global: float
    bound_min: float
    connected: bool
    pass_global: bool
    pass_min: bool
    pass_min_deep: bool
    spectral_radius: float
    w_norm: float
    sample_size: int = None
    pairs: np.ndarray = field(default=None, repr=False)

    def to_dict(self):
        values = asdict(self)
        values.pop("pairs")
        return values


def _eigenpairs(gso):
    diag = default_diag_cache().get(gso)
    return diag.eigenvalues, diag.p


def second_eigenvalue(eigenvalues):
    """Largest eigenvalue magnitude after dropping the top (Perron) eigenvalue."""
    if len(eigenvalues) < 2:
        return 0.0
    return float(np.max(np.abs(eigenvalues[1:])))


def sensitivity_profile(graph, w, delta, sample=None, seed=0):
    """
    :param graph: :class:`~mpssm.graphcore.Graph`
    :param w: ``c x c`` recurrence weight
    :param delta: depth ``t - s``
    :param sample: number of uniformly drawn node pairs; required when ``n`` exceeds
        :data:`ALL_PAIRS_LIMIT`
    :rtype: SensitivityReport
    """
    if sample is None and graph.n > ALL_PAIRS_LIMIT:
        raise ValueError("n={} exceeds the all-pairs limit {}; pass sample=".format(
            graph.n, ALL_PAIRS_LIMIT))
    gso = build_gso(graph)
    a_pow = mat_power(_dense(gso), delta)
    w_norm = spectral_norm(mat_power(np.asarray(w), delta))
    oracle = bfs_oracle(graph)

    if sample is None:
        pairs = np.abs(a_pow) * w_norm
        values, reachable = pairs, oracle.reachable
        sample_size = None
    else:
        rng = np.random.default_rng(seed)
        rows, cols = rng.integers(graph.n, size=(2, sample))
        values = np.abs(a_pow[rows, cols]) * w_norm
        reachable = oracle.reachable[rows, cols]
        pairs, sample_size = None, int(sample)

    eigenvalues, _ = _eigenpairs(gso)
    radius = float(np.max(np.abs(eigenvalues)))
    s_global = float(np.max(values))
    s_min = float(np.min(values[reachable])) if np.any(reachable) else 0.0
    bound_global = radius ** delta * w_norm / graph.n

    if oracle.connected:
        bound_min = 2.0 * w_norm / (graph.n + 2 * graph.num_edges)
        residual = second_eigenvalue(eigenvalues) ** delta * w_norm
        floor = bound_min * (1.0 - MIN_SLACK)
        pass_min = bool(s_min >= floor)
        pass_min_deep = bool(s_min + residual >= floor)
    else:
        bound_min = pass_min = pass_min_deep = None

    return SensitivityReport(
        delta=int(delta),
        s_global=s_global,
        s_min=s_min,
        bound_global=float(bound_global),
        bound_min=bound_min,
        connected=oracle.connected,
        pass_global=bool(s_global + GLOBAL_SLACK * bound_global >= bound_global),
        pass_min=pass_min,
        pass_min_deep=pass_min_deep,
        spectral_radius=radius,
        w_norm=float(w_norm),
        sample_size=sample_size,
        pairs=pairs,
    )


def deep_regime_factor(graph, i, j):
    """``sqrt((1 + d_i)(1 + d_j)) / (|V| + 2|E|)``, the limit of ``(A^D)_ij`` for large D."""
    if not graph.is_connected:
        raise GraphError("the deep-regime approximation needs a connected graph")
    degrees = graph.degrees
    return float(np.sqrt((1.0 + degrees[i]) * (1.0 + degrees[j])) / (
        graph.n + 2 * graph.num_edges))


def deep_regime_matrix(graph):
    d = np.sqrt(1.0 + graph.degrees)
    return np.outer(d, d) / (graph.n + 2 * graph.num_edges)


@dataclass(eq=False)
class ConvergenceReport:
    lambda2: float
    fitted_ratio: float
    deltas: list
    deviations: list
    passed: bool

    def to_dict(self):
        return asdict(self)


def _power_from_eig(eigenvalues, p, delta):
    return (p * eigenvalues ** delta) @ p.T


def deep_regime_convergence(graph, deltas=None, tolerance=CONVERGENCE_TOL):
    """
    Fit the geometric decay rate of ``max_ij |(A^D)_ij - factor_ij|`` over ``deltas`` (default
    50..200) and compare it with ``|lambda_2|``. Points whose deviation has reached the roundoff
    floor are dropped and the fit uses the deeper half of what remains. When ``|lambda_2|`` is
    small the default range shrinks towards smaller depths.
    """
    if not graph.is_connected:
        raise GraphError("the deep-regime approximation needs a connected graph")
    eigenvalues, p = _eigenpairs(build_gso(graph))
    lambda2 = second_eigenvalue(eigenvalues)
    factor = deep_regime_matrix(graph)

    if deltas is None:
        deltas = list(range(50, DEEP_DELTA + 1, 10))
        if lambda2 > 0:
            reach = int(np.log(DEVIATION_FLOOR * 100) / np.log(lambda2))
            if reach < 200:
                step = max(reach // 16, 1)
                deltas = list(range(max(reach // 4, 1), max(reach, 2) + 1, step))

    deviations = [
        float(np.max(np.abs(_power_from_eig(eigenvalues, p, delta) - factor)))
        for delta in deltas
    ]
    usable = [(d, dev) for d, dev in zip(deltas, deviations) if dev > DEVIATION_FLOOR]
    if len(usable) < 2:
        passed = all(dev <= DEVIATION_FLOOR for dev in deviations[1:]) and lambda2 < 0.5
        return ConvergenceReport(lambda2, 0.0, list(deltas), deviations, passed)

    # the tail is dominated by lambda_2; earlier points still carry the faster modes
    if len(usable) >= 4:
        usable = usable[len(usable) // 2:]
    x = np.array([d for d, _ in usable], dtype=np.float64)
    y = np.log([dev for _, dev in usable])
    slope = np.polyfit(x, y, 1)[0]
    fitted = float(np.exp(slope))
    passed = abs(fitted / lambda2 - 1.0) <= tolerance
    return ConvergenceReport(lambda2, fitted, list(deltas), deviations, passed)


@dataclass(eq=False)
class CheckResult:
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)


def verify_spectrum_lemma(gso, t_max=64, ts=None):
    """
    Checks that the GSO spectrum lies in ``[-1, 1]``, that ``d = sqrt(1 + degree)`` is fixed by
    ``A`` and that powers of ``A`` neither blow up nor vanish: ``|A^t|_2 = 1`` and
    ``|A^t|_F >= 1`` for ``t`` in ``ts`` (default ``1 .. t_max``).

    :return: list of :class:`CheckResult`; never raises on failure
    """
    eigenvalues, _ = _eigenpairs(gso)
    a = _dense(gso)
    d = 1.0 / gso.inv_sqrt_deg
    results = [
        CheckResult(
            "spectrum_in_unit_interval",
            bool(np.all(np.abs(eigenvalues) <= 1.0 + EIGENVALUE_SLACK)),
            {"min": float(eigenvalues[-1]), "max": float(eigenvalues[0])},
        )
    ]
    fixed = float(np.max(np.abs(a @ d - d)))
    results.append(CheckResult("degree_vector_fixed", fixed <= FIXED_POINT_TOL, {"error": fixed}))

    worst_norm, worst_fro = 0.0, np.inf
    a_pow = np.eye(gso.n)
    ts = sorted(set(ts)) if ts is not None else list(range(1, t_max + 1))
    power = 0
    for t in ts:
        a_pow = a_pow @ mat_power(a, t - power)
        power = t
        norm = spectral_norm(a_pow)
        worst_norm = max(worst_norm, abs(norm - 1.0))
        worst_fro = min(worst_fro, float(np.linalg.norm(a_pow)))
    results.append(CheckResult("powers_unit_norm", worst_norm <= NORM_TOL, {"error": worst_norm}))
    results.append(CheckResult(
        "powers_not_vanishing", worst_fro >= 1.0 - NORM_TOL, {"min_frobenius": worst_fro}))
    return results


@dataclass(eq=False)
class BottleneckReport:
    m: int
    d: int
    bridges: tuple
    factor: float
    asymptotic: float
    measured: float
    delta: int
    relative_gap: float

    def to_dict(self):
        return asdict(self)


def bottleneck_report(m=6, d=10, delta=DEEP_DELTA):
    """
    Deep-regime sensitivity between the two farthest bridge nodes of ``clique_chain(m, d)``:
    the exact factor ``3 / (|V| + 2|E|)``, the asymptotic ``3 / (m d^2)`` and the measured
    ``(A^delta)_ij``.
    """
    graph = clique_chain(m, d)
    bridges = bridge_nodes(m, d)
    i, j = bridges[0], bridges[-1]
    factor = deep_regime_factor(graph, i, j)
    eigenvalues, p = _eigenpairs(build_gso(graph))
    measured = float(_power_from_eig(eigenvalues, p, delta)[i, j])
    return BottleneckReport(
        m=m, d=d, bridges=(i, j), factor=factor, asymptotic=3.0 / (m * d * d),
        measured=measured, delta=int(delta), relative_gap=abs(measured - factor) / factor,
    )


def walk_zero_check(gso, graph, delta):
    """``(A^delta)_ij == 0`` exactly where no walk of length ``delta`` joins ``i`` and ``j``."""
    reach = np.eye(graph.n, dtype=np.int64)
    step = (graph.csr.toarray() + np.eye(graph.n) > 0).astype(np.int64)
    for _ in range(delta):
        reach = np.minimum(reach @ step, 1)
    a_pow = mat_power(_dense(gso), delta)
    return bool(np.array_equal(a_pow != 0.0, reach > 0))


def _random_walk(graph, k, rng):
    node = int(rng.integers(graph.n))
    walk = [node]
    for _ in range(k):
        neighbors = graph.neighbors(node)
        node = int(neighbors[rng.integers(len(neighbors))])
        walk.append(node)
    return walk


def vanishing_rate_experiment(graph, k, width=128, trials=20, seed=0, bias=0.0):
    """
    Monte-Carlo estimate of how much faster a residual ReLU GCN loses Jacobian norm than the
    linear recurrence with the same weights.

    Each trial draws ``W ~ N(0, 1/width)`` and ``X_0 ~ N(0, 1)``, runs the residual GCN forward and
    follows a random walk ``j = i_0, i_1, ..., i_k`` over neighbours. Along the walk the linear
    Jacobian-vector product is multiplied by ``M_t = A_{i_{t+1} i_t} W^T`` and the GCN one also by
    the ReLU mask ``1[A_{i_{t+1} i_t} X_t^(i_t) W + bias > 0]``.

    :return: mean over trials of ``log2(|J_gcn x| / |J_lin x|) / k``; about ``-0.5``
    """
    if width < MIN_VANISHING_WIDTH:
        raise ValueError("width must be at least {}".format(MIN_VANISHING_WIDTH))
    if k < 0:
        raise ValueError("k must be non-negative")
    if graph.n < 2 or not graph.is_connected:
        raise GraphError("the vanishing-rate experiment needs a connected graph with an edge")
    if k == 0:
        return 0.0

    gso = build_gso(graph)
    a = _dense(gso)
    rates = []
    for trial in range(trials):
        rng = np.random.default_rng(derive_seed(seed, trial))
        w = rng.standard_normal((width, width)) / np.sqrt(width)
        layer = Affine(w, np.full(width, float(bias)))
        params = GcnParams([layer], k, activation="relu", residual=True, shared=True)
        states = gcn_forward(gso, params, rng.standard_normal((graph.n, width))).states
        walk = _random_walk(graph, k, rng)

        v_gcn = v_lin = rng.standard_normal(width)
        for t in range(k):
            src, dst = walk[t], walk[t + 1]
            mask = (a[dst, src] * states[t][src] @ w + bias) > 0
            v_lin = a[dst, src] * (w.T @ v_lin)
            v_gcn = mask * (a[dst, src] * (w.T @ v_gcn))
            scale = np.linalg.norm(v_lin)
            v_lin, v_gcn = v_lin / scale, v_gcn / scale
        ratio = np.linalg.norm(v_gcn) / np.linalg.norm(v_lin)
        rates.append(np.log2(max(ratio, np.finfo(float).tiny)) / k)

    rate = float(np.mean(rates))
    log.info("vanishing rate over %d trial(s): %.4f log2 per layer (k=%d, width=%d)",
             trials, rate, k, width)
    return rate


def jacobian_error(gso, w, i, j, delta, h=1e-5, seed=0):
    """Relative error between :func:`exact_jacobian` and :func:`finite_diff_jacobian`."""
    c = np.asarray(w).shape[0]
    params = BlockParams(np.asarray(w), np.eye(c), Mlp.identity(c), delta)
    exact = exact_jacobian(gso, w, i, j, delta)
    approx = finite_diff_jacobian(gso, params, i, j, 0, delta, h=h, seed=seed)
    return relative_error(approx, exact)
