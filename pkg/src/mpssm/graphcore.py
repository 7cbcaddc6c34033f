"""
Graphs, graph shift operators, synthetic generators and breadth-first ground truth.

# Representation

A :class:`Graph` is an immutable, undirected, unweighted graph stored as a sorted tuple of
``(i, j)`` pairs with ``i < j``. Self-loops are never stored: the graph shift operator built by
:func:`build_gso` adds the identity itself,

    A = D^-1/2 (Adj + I) D^-1/2,    D = diag(1 + degree)

so every entry is ``(1 + d_i)^-1/2 (1 + d_j)^-1/2`` on the sparsity pattern of ``Adj + I``.

# Ground truth

:func:`bfs_oracle` computes all-pairs hop distances by breadth-first search. Unreachable pairs hold
:data:`UNREACHABLE`, a reserved value that must never enter arithmetic; eccentricities and the
diameter only ever look at finite entries.
"""
import hashlib
import logging
from dataclasses import dataclass, replace
from functools import cached_property, lru_cache

import networkx as nx
import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, shortest_path

from mpssm.exceptions import DatasetError, GraphError, GraphGenerationError
from mpssm.utils import derive_seed

log = logging.getLogger(__name__)

UNREACHABLE = np.iinfo(np.int64).max
CONNECT_ATTEMPTS = 1000
TASKS = ("diameter", "sssp", "eccentricity")
SPLITS = ("train", "val", "test")
GRAPH_KINDS = ("erdos_renyi", "gnm", "clique_chain", "path", "cycle", "tree")


@dataclass(frozen=True)
class Graph:
    n: int
    edges: tuple

    def __post_init__(self):
        if int(self.n) < 1:
            raise GraphError("a graph needs at least one node (n={})".format(self.n))
        previous = None
        for i, j in self.edges:
            if not 0 <= i < j < self.n:
                raise GraphError("edge ({}, {}) is not a normalised pair in [0, {})".format(
                    i, j, self.n))
            if previous is not None and (i, j) <= previous:
                raise GraphError("edges must be sorted and unique; use Graph.from_edges")
            previous = (i, j)

    @classmethod
    def from_edges(cls, n, edges):
        """
        Normalise an arbitrary iterable of node pairs: orders each pair, collapses duplicates
        (including reversed duplicates) and sorts.

        :raises GraphError: on self-loops or node indices outside ``[0, n)``
        """
        n = int(n)
        pairs = set()
        for i, j in edges:
            i, j = int(i), int(j)
            if i == j:
                raise GraphError("self-loop at node {} (the GSO adds self-loops itself)".format(i))
            if not (0 <= i < n and 0 <= j < n):
                raise GraphError("edge ({}, {}) out of range for n={}".format(i, j, n))
            pairs.add((min(i, j), max(i, j)))
        return cls(n, tuple(sorted(pairs)))

    @classmethod
    def from_networkx(cls, g):
        mapping = {node: index for index, node in enumerate(sorted(g.nodes()))}
        return cls.from_edges(len(mapping), ((mapping[u], mapping[v]) for u, v in g.edges()))

    @cached_property
    def csr(self):
        """Symmetric 0/1 adjacency in CSR form with sorted column indices per row."""
        if self.edges:
            rows, cols = np.array(self.edges, dtype=np.int64).T
        else:
            rows = cols = np.zeros(0, dtype=np.int64)
        data = np.ones(2 * len(rows))
        adj = sp.coo_matrix(
            (data, (np.concatenate([rows, cols]), np.concatenate([cols, rows]))),
            shape=(self.n, self.n),
        ).tocsr()
        adj.sort_indices()
        return adj

    @cached_property
    def degrees(self):
        return np.diff(self.csr.indptr)

    @property
    def num_edges(self):
        return len(self.edges)

    def neighbors(self, i):
        return self.csr.indices[self.csr.indptr[i]:self.csr.indptr[i + 1]]

    @cached_property
    def is_connected(self):
        count, _ = connected_components(self.csr, directed=False)
        return count == 1

    @cached_property
    def fingerprint(self):
        digest = hashlib.sha256("n={};".format(self.n).encode())
        digest.update(np.array(self.edges, dtype=np.int64).tobytes())
        return digest.hexdigest()

    def permute(self, perm):
        """
        :param perm: sequence where ``perm[i]`` is the new index of node ``i``
        :return: the relabelled graph; node features follow with ``x_new[perm] = x``
        """
        perm = np.asarray(perm, dtype=np.int64)
        if sorted(perm.tolist()) != list(range(self.n)):
            raise GraphError("not a permutation of {} nodes".format(self.n))
        return Graph.from_edges(self.n, ((perm[i], perm[j]) for i, j in self.edges))

    def to_networkx(self):
        g = nx.Graph()
        g.add_nodes_from(range(self.n))
        g.add_edges_from(self.edges)
        return g


@dataclass(frozen=True, eq=False)
class Gso:
    """Symmetrically normalised adjacency with self-loops, optionally with its eigenpairs."""

    values: sp.csr_matrix
    inv_sqrt_deg: np.ndarray
    fingerprint: str
    eig: tuple = None

    @property
    def n(self):
        return self.values.shape[0]

    def dense(self):
        return self.values.toarray()

    def shift(self, x):
        """One hop of aggregation, ``A @ x``."""
        return self.values @ x

    def with_eig(self):
        """Return a copy carrying ``(eigenvalues descending, orthogonal P)``."""
        if self.eig is not None:
            return self
        from mpssm.linalg import sym_eig

        return replace(self, eig=sym_eig(self.dense()))


@lru_cache(maxsize=256)
def build_gso(graph):
    """
    :param graph: :class:`Graph`
    :return: :class:`Gso` for ``D^-1/2 (Adj + I) D^-1/2``; eigenpairs are not computed
    """
    inv_sqrt_deg = 1.0 / np.sqrt(1.0 + graph.degrees)
    scale = sp.diags(inv_sqrt_deg)
    values = (scale @ (graph.csr + sp.identity(graph.n, format="csr")) @ scale).tocsr()
    values.sort_indices()
    return Gso(values=values, inv_sqrt_deg=inv_sqrt_deg, fingerprint=graph.fingerprint)


@dataclass(frozen=True, eq=False)
class StructuralOracle:
    dist: np.ndarray
    ecc: np.ndarray
    diameter: int
    connected: bool

    @property
    def reachable(self):
        return self.dist != UNREACHABLE


def bfs_oracle(graph):
    """Hop distances from every source by breadth-first search, plus eccentricities."""
    hops = shortest_path(graph.csr, directed=False, unweighted=True)
    finite = np.isfinite(hops)
    dist = np.full(hops.shape, UNREACHABLE, dtype=np.int64)
    dist[finite] = hops[finite].astype(np.int64)
    ecc = np.where(finite, dist, 0).max(axis=1)
    return StructuralOracle(
        dist=dist, ecc=ecc, diameter=int(ecc.max()), connected=bool(finite.all())
    )


# --- Generators ---


def _require(condition, message):
    if not condition:
        raise ValueError(message)


def clique_chain(m, d):
    """
    ``m`` cliques of order ``d`` in a chain. Clique ``c`` occupies nodes ``c*(d+1) .. c*(d+1)+d-1``
    and is followed by its bridge node ``c*(d+1)+d``, which links the last node of clique ``c``
    to the first node of clique ``c+1``.
    """
    _require(m >= 2 and d >= 3, "clique_chain needs m >= 2 and d >= 3")
    edges = []
    for c in range(m):
        base = c * (d + 1)
        edges.extend((base + a, base + b) for a in range(d) for b in range(a + 1, d))
        if c < m - 1:
            bridge = base + d
            edges.append((base + d - 1, bridge))
            edges.append((bridge, bridge + 1))
    return Graph.from_edges(m * d + m - 1, edges)


def bridge_nodes(m, d):
    return [c * (d + 1) + d for c in range(m - 1)]


def _random_tree(n, rng):
    if n <= 2:
        return Graph.from_edges(n, [(0, 1)] if n == 2 else [])
    prufer = rng.integers(0, n, size=n - 2).tolist()
    return Graph.from_networkx(nx.from_prufer_sequence(prufer))


def _sample_until(sample, require_connected, seed, label):
    rng = np.random.default_rng(seed)
    for attempt in range(CONNECT_ATTEMPTS):
        graph = Graph.from_networkx(sample(int(rng.integers(2 ** 32))))
        if not require_connected or graph.is_connected:
            if attempt:
                log.debug("%s: connected sample after %d rejection(s)", label, attempt)
            return graph
    raise GraphGenerationError(
        "{}: no connected sample in {} attempts".format(label, CONNECT_ATTEMPTS)
    )


def gen_graph(kind, seed=0, require_connected=False, n=None, p=None, m=None, d=None, edges=None):
    """
    :param kind: one of :data:`GRAPH_KINDS`
    :param seed: seed for the random kinds (``erdos_renyi``, ``gnm``, ``tree``)
    :param require_connected: resample random kinds until connected, at most
        :data:`CONNECT_ATTEMPTS` times
    :param n: node count (``erdos_renyi``, ``gnm``, ``path``, ``cycle``, ``tree``)
    :param p: edge probability (``erdos_renyi``)
    :param m: number of cliques (``clique_chain``)
    :param d: clique order (``clique_chain``)
    :param edges: exact edge count (``gnm``)
    :rtype: Graph
    :raises GraphGenerationError: if the resampling budget is exhausted
    """
    if kind == "clique_chain":
        return clique_chain(m, d)

    _require(n is not None and n >= 1, "{} needs n >= 1".format(kind))
    if kind == "path":
        return Graph.from_edges(n, ((i, i + 1) for i in range(n - 1)))
    if kind == "cycle":
        _require(n >= 3, "cycle needs n >= 3")
        return Graph.from_edges(n, ((i, (i + 1) % n) for i in range(n)))
    if kind == "tree":
        return _random_tree(n, np.random.default_rng(seed))
    if kind == "erdos_renyi":
        _require(p is not None and 0.0 <= p <= 1.0, "erdos_renyi needs p in [0, 1]")
        label = "erdos_renyi(n={}, p={:.3f})".format(n, p)
        return _sample_until(
            lambda s: nx.gnp_random_graph(n, p, seed=s), require_connected, seed, label
        )
    if kind == "gnm":
        _require(edges is not None and 0 <= edges <= n * (n - 1) // 2, "gnm needs a valid edges")
        label = "gnm(n={}, m={})".format(n, edges)
        return _sample_until(
            lambda s: nx.gnm_random_graph(n, edges, seed=s), require_connected, seed, label
        )
    raise ValueError("unknown graph kind {!r}; expected one of {}".format(kind, GRAPH_KINDS))


# --- Graph property prediction data ---


@dataclass(frozen=True, eq=False)
class GppRecord:
    graph: Graph
    features: np.ndarray
    targets: np.ndarray
    split: str
    source: int = None


@dataclass(frozen=True, eq=False)
class GppDataset:
    task: str
    records: tuple

    def __post_init__(self):
        if self.task not in TASKS:
            raise DatasetError("unknown task {!r}; expected one of {}".format(self.task, TASKS))
        dims = {record.features.shape[1] for record in self.records}
        if len(dims) > 1:
            raise DatasetError("feature dimension varies across records: {}".format(sorted(dims)))

    @property
    def graph_level(self):
        return self.task == "diameter"

    @property
    def feature_dim(self):
        return self.records[0].features.shape[1] if self.records else feature_dim(self.task)

    def split(self, name):
        if name not in SPLITS:
            raise DatasetError("unknown split {!r}".format(name))
        return [record for record in self.records if record.split == name]


def feature_dim(task):
    return 2 if task == "sssp" else 1


def gpp_targets(graph, task, source=0, oracle=None):
    """
    :return: ``[diameter]`` for graph-level tasks, one value per node otherwise
    """
    oracle = oracle or bfs_oracle(graph)
    if not oracle.connected:
        raise GraphError("graph property targets need a connected graph")
    if task == "diameter":
        return np.array([float(oracle.diameter)])
    if task == "eccentricity":
        return oracle.ecc.astype(np.float64)
    if task == "sssp":
        return oracle.dist[source].astype(np.float64)
    raise DatasetError("unknown task {!r}; expected one of {}".format(task, TASKS))


def split_sizes(count, fractions):
    fractions = [float(f) for f in fractions]
    if len(fractions) != 3 or min(fractions) < 0 or abs(sum(fractions) - 1.0) > 1e-9:
        raise DatasetError(
            "split fractions must be three non-negative values summing to 1, got {}".format(
                fractions)
        )
    n_train = int(round(count * fractions[0]))
    n_val = min(int(round(count * fractions[1])), count - n_train)
    return n_train, n_val, count - n_train - n_val


def gen_gpp_dataset(
    task, count, n_range=(25, 35), seed=0, split_fractions=(0.7, 0.15, 0.15), edge_prob=(0.1, 0.3)
):
    """
    Generate ``count`` connected Erdos-Renyi graphs with per-record node count drawn from
    ``n_range`` (inclusive) and edge probability drawn from ``edge_prob``. Features are one uniform
    ``[0, 1)`` scalar per node; the ``sssp`` task adds a one-hot channel marking the source node.

    Record ``i`` only depends on ``(seed, i)``; splits are assigned in record order.
    """
    if task not in TASKS:
        raise DatasetError("unknown task {!r}; expected one of {}".format(task, TASKS))
    lo, hi = int(n_range[0]), int(n_range[1])
    if not 1 <= lo <= hi:
        raise DatasetError("invalid node range [{}, {}]".format(lo, hi))
    sizes = split_sizes(count, split_fractions)
    tags = [name for name, size in zip(SPLITS, sizes) for _ in range(size)]

    records = []
    for index, tag in enumerate(tags):
        rng = np.random.default_rng(derive_seed(seed, index))
        n = int(rng.integers(lo, hi + 1))
        p = float(rng.uniform(*edge_prob))
        graph = gen_graph(
            "erdos_renyi", n=n, p=p, seed=int(rng.integers(2 ** 32)), require_connected=True
        )
        features = rng.random((n, 1))
        source = None
        if task == "sssp":
            source = int(rng.integers(n))
            one_hot = np.zeros((n, 1))
            one_hot[source] = 1.0
            features = np.hstack([features, one_hot])
        targets = gpp_targets(graph, task, source=source or 0)
        records.append(GppRecord(graph, features, targets, tag, source))
    log.info("generated %d %s records (train/val/test = %d/%d/%d)", count, task, *sizes)
    return GppDataset(task=task, records=tuple(records))


# --- Temporal data ---


@dataclass(frozen=True, eq=False)
class TemporalDataset:
    graph: Graph
    signal: np.ndarray
    horizon: int

    @property
    def inputs(self):
        return self.signal[: len(self.signal) - self.horizon]

    @property
    def targets(self):
        return self.signal[self.horizon:]

    def pairs(self):
        return list(zip(self.inputs, self.targets))


def gen_temporal_dataset(graph, horizon, length, seed=0, noise=0.1, channels=1):
    """
    Heat diffusion on the GSO, ``x_{t+1} = A x_t + noise * N(0, 1)``, from a standard normal
    ``x_0``. Targets are the signal shifted by ``horizon`` steps.
    """
    if not length > horizon >= 1:
        raise ValueError("need length > horizon >= 1 (length={}, horizon={})".format(
            length, horizon))
    gso = build_gso(graph)
    rng = np.random.default_rng(seed)
    signal = np.empty((length, graph.n, channels))
    signal[0] = rng.standard_normal((graph.n, channels))
    for t in range(1, length):
        signal[t] = gso.shift(signal[t - 1])
        if noise:
            signal[t] += noise * rng.standard_normal((graph.n, channels))
    return TemporalDataset(graph=graph, signal=signal, horizon=horizon)
