import itertools

import networkx as nx
import numpy as np
import pytest

from mpssm.exceptions import DatasetError, GraphError, GraphGenerationError
from mpssm.graphcore import (
    UNREACHABLE,
    Graph,
    bfs_oracle,
    bridge_nodes,
    build_gso,
    clique_chain,
    gen_gpp_dataset,
    gen_graph,
    gen_temporal_dataset,
    split_sizes,
)


def test_from_edges_normalises_pairs():
    graph = Graph.from_edges(4, [(2, 1), (1, 2), (0, 3), (3, 0)])
    assert graph.edges == ((0, 3), (1, 2))
    assert graph.num_edges == 2


@pytest.mark.parametrize("edges", [[(1, 1)], [(0, 5)], [(-1, 0)]])
def test_from_edges_rejects_invalid(edges):
    with pytest.raises(GraphError):
        Graph.from_edges(3, edges)


def test_constructor_requires_normalised_edges():
    with pytest.raises(GraphError):
        Graph(3, ((1, 0),))
    with pytest.raises(GraphError):
        Graph(0, ())


def test_gso_path3(path3):
    a = build_gso(path3).dense()
    assert a[0, 0] == pytest.approx(0.5)
    assert a[1, 1] == pytest.approx(1.0 / 3.0)
    assert a[0, 1] == pytest.approx(1.0 / np.sqrt(6.0))
    assert a[0, 2] == 0.0
    np.testing.assert_array_equal(a, a.T)


def test_gso_isolated_node():
    np.testing.assert_array_equal(build_gso(Graph(1, ())).dense(), [[1.0]])


def test_gso_k3(k3):
    np.testing.assert_allclose(build_gso(k3).dense(), np.full((3, 3), 1.0 / 3.0), atol=1e-15)


def test_gso_entries_from_degrees(er_graph):
    a = build_gso(er_graph).dense()
    d = 1.0 + er_graph.degrees
    pattern = er_graph.csr.toarray() + np.eye(er_graph.n)
    expected = pattern / np.sqrt(np.outer(d, d))
    np.testing.assert_allclose(a, expected, rtol=0, atol=1e-15)
    np.testing.assert_array_equal(a != 0, pattern != 0)


def test_gso_is_cached(er_graph):
    assert build_gso(er_graph) is build_gso(er_graph)


def test_with_eig(k3):
    gso = build_gso(k3).with_eig()
    eigenvalues, p = gso.eig
    np.testing.assert_allclose(eigenvalues, [1.0, 0.0, 0.0], atol=1e-12)
    np.testing.assert_allclose((p * eigenvalues) @ p.T, gso.dense(), atol=1e-8)
    assert gso.with_eig() is gso


def test_clique_chain_counts(chain):
    assert chain.n == 65
    assert chain.num_edges == 280
    assert chain.is_connected


def test_clique_chain_degrees(chain):
    bridges = bridge_nodes(6, 10)
    assert len(bridges) == 5
    assert all(chain.degrees[b] == 2 for b in bridges)
    others = np.setdiff1d(np.arange(chain.n), bridges)
    assert set(chain.degrees[others].tolist()) == {9, 10}


def test_clique_chain_rejects_small():
    with pytest.raises(ValueError):
        clique_chain(1, 10)
    with pytest.raises(ValueError):
        clique_chain(3, 2)


def test_path_and_cycle():
    assert gen_graph("path", n=4).edges == ((0, 1), (1, 2), (2, 3))
    assert gen_graph("cycle", n=4).num_edges == 4


def test_erdos_renyi_connected():
    graph = gen_graph("erdos_renyi", n=30, p=0.2, seed=7, require_connected=True)
    assert graph.n == 30
    assert graph.is_connected
    assert graph == gen_graph("erdos_renyi", n=30, p=0.2, seed=7, require_connected=True)


def test_erdos_renyi_budget_exhausted():
    with pytest.raises(GraphGenerationError):
        gen_graph("erdos_renyi", n=30, p=0.0, seed=1, require_connected=True)


def test_gnm_edge_count():
    graph = gen_graph("gnm", n=20, edges=40, seed=2)
    assert graph.num_edges == 40


def test_unknown_kind():
    with pytest.raises(ValueError):
        gen_graph("star", n=4)


def test_bfs_path4():
    oracle = bfs_oracle(gen_graph("path", n=4))
    assert oracle.diameter == 3
    assert oracle.ecc[0] == 3
    assert oracle.ecc[1] == 2
    assert oracle.connected


def test_bfs_k3(k3):
    oracle = bfs_oracle(k3)
    assert oracle.diameter == 1
    np.testing.assert_array_equal(oracle.ecc, [1, 1, 1])


def test_bfs_disconnected():
    oracle = bfs_oracle(Graph(2, ()))
    assert oracle.dist[0, 1] == UNREACHABLE
    assert not oracle.connected
    assert not oracle.reachable[0, 1]
    assert oracle.diameter == 0


def test_bfs_metric_properties(er_graph):
    dist = bfs_oracle(er_graph).dist
    np.testing.assert_array_equal(dist, dist.T)
    assert np.all(np.diag(dist) == 0)
    for i, j, k in itertools.product(range(er_graph.n), repeat=3):
        assert dist[i, k] <= dist[i, j] + dist[j, k]


@pytest.mark.parametrize("seed", range(5))
def test_bfs_on_trees(seed):
    tree = gen_graph("tree", n=15, seed=seed)
    assert tree.num_edges == 14
    assert tree.is_connected
    g = tree.to_networkx()
    dist = bfs_oracle(tree).dist
    for i, j in itertools.combinations(range(tree.n), 2):
        (path,) = list(nx.all_simple_paths(g, i, j))
        assert dist[i, j] == len(path) - 1


def test_permute_preserves_structure(er_graph, rng):
    perm = rng.permutation(er_graph.n)
    moved = er_graph.permute(perm)
    assert moved.num_edges == er_graph.num_edges
    np.testing.assert_array_equal(moved.degrees[perm], er_graph.degrees)
    with pytest.raises(GraphError):
        er_graph.permute([0] * er_graph.n)


def test_fingerprint_depends_on_edges(path3, k3):
    assert path3.fingerprint != k3.fingerprint
    assert path3.fingerprint == gen_graph("path", n=3).fingerprint


def test_split_sizes():
    assert split_sizes(500, (0.7, 0.15, 0.15)) == (350, 75, 75)
    # train and val round to nearest, test takes the remainder
    assert split_sizes(12, (0.7, 0.15, 0.15)) == (8, 2, 2)
    assert split_sizes(7, (0.7, 0.15, 0.15)) == (5, 1, 1)
    assert split_sizes(3, (0.4, 0.6, 0.0)) == (1, 2, 0)
    with pytest.raises(DatasetError):
        split_sizes(10, (0.5, 0.5, 0.5))


def test_gpp_dataset_diameter(diameter_dataset):
    assert len(diameter_dataset.records) == 20
    assert diameter_dataset.graph_level
    assert diameter_dataset.feature_dim == 1
    for record in diameter_dataset.records:
        assert record.graph.is_connected
        assert 6 <= record.graph.n <= 9
        assert np.all((record.features >= 0) & (record.features < 1))
        assert record.targets == [bfs_oracle(record.graph).diameter]


def test_gpp_dataset_sssp():
    dataset = gen_gpp_dataset("sssp", 6, n_range=(5, 7), seed=1)
    assert dataset.feature_dim == 2
    for record in dataset.records:
        assert record.features[:, 1].sum() == 1.0
        assert record.features[record.source, 1] == 1.0
        assert record.targets[record.source] == 0.0


def test_gpp_dataset_eccentricity(eccentricity_dataset):
    record = eccentricity_dataset.records[0]
    np.testing.assert_array_equal(record.targets, bfs_oracle(record.graph).ecc)


def test_gpp_dataset_deterministic():
    first = gen_gpp_dataset("diameter", 5, n_range=(5, 6), seed=9)
    second = gen_gpp_dataset("diameter", 5, n_range=(5, 6), seed=9)
    for a, b in zip(first.records, second.records):
        assert a.graph == b.graph
        np.testing.assert_array_equal(a.features, b.features)


def test_gpp_dataset_errors():
    with pytest.raises(DatasetError):
        gen_gpp_dataset("girth", 5)
    with pytest.raises(DatasetError):
        gen_gpp_dataset("diameter", 5, n_range=(9, 5))
    with pytest.raises(DatasetError):
        gen_gpp_dataset("diameter", 5, split_fractions=(0.9, 0.2, 0.0))


def test_temporal_noiseless(er_graph):
    dataset = gen_temporal_dataset(er_graph, horizon=1, length=64, seed=0, noise=0.0)
    pairs = dataset.pairs()
    assert len(pairs) == 63
    a = build_gso(er_graph).dense()
    for x, y in pairs[:5]:
        np.testing.assert_allclose(y, a @ x, atol=1e-12)


def test_temporal_deterministic(er_graph):
    first = gen_temporal_dataset(er_graph, horizon=2, length=10, seed=5)
    second = gen_temporal_dataset(er_graph, horizon=2, length=10, seed=5)
    assert first.signal.tobytes() == second.signal.tobytes()
    with pytest.raises(ValueError):
        gen_temporal_dataset(er_graph, horizon=10, length=10)
