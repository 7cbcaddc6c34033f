import numpy as np
import pytest

from mpssm.exceptions import DimensionError, TapeError
from mpssm.graphcore import Graph, bfs_oracle, build_gso, gen_graph
from mpssm.models import (
    Affine,
    Architecture,
    BlockParams,
    GcnParams,
    GradientTape,
    LayerNorm,
    Mlp,
    activation,
    block_backward,
    block_forward,
    deep_forward,
    gcn_backward,
    gcn_forward,
    init_deep_model,
    make_input_sequence,
    multihop_forward,
    named_parameters,
    unfolded_forward,
    unfolded_state,
)
from mpssm.models.block import STATIC, TEMPORAL
from mpssm.models.deep import VARIANTS
from mpssm.models.layers import dropout_mask
from tests.utils import assert_relative, central_difference, random_block


# --- Input sequences ---


def test_static_sequence(rng):
    u = rng.standard_normal((4, 2))
    sequence = make_input_sequence(u, 2)
    assert sequence.mode == STATIC
    assert sequence.k == 2
    assert all(step is u for step in sequence.steps)


def test_temporal_sequence(rng):
    steps = [rng.standard_normal((4, 2)) for _ in range(3)]
    sequence = make_input_sequence(steps, 2)
    assert sequence.mode == TEMPORAL
    for given, kept in zip(steps, sequence.steps):
        np.testing.assert_array_equal(given, kept)


@pytest.mark.parametrize(
    "u",
    [
        [np.ones((4, 2))] * 2,
        [],
        [np.ones((4, 2)), np.ones((3, 2)), np.ones((4, 2))],
    ],
)
def test_temporal_sequence_errors(u):
    with pytest.raises(DimensionError):
        make_input_sequence(u, 2)


def test_sequence_rejects_negative_depth():
    with pytest.raises(ValueError):
        make_input_sequence(np.ones((2, 2)), -1)


# --- Layers ---


@pytest.mark.parametrize("name", ["relu", "gelu", "tanh", "identity"])
def test_activation_derivatives(name):
    phi, phi_grad = activation(name)
    x = np.array([-1.3, -0.2, 0.4, 2.1])
    numeric = (phi(x + 1e-6) - phi(x - 1e-6)) / 2e-6
    np.testing.assert_allclose(phi_grad(x), numeric, atol=1e-6)


def test_unknown_activation():
    with pytest.raises(ValueError):
        activation("swish")


def test_layer_norm_backward(rng):
    norm = LayerNorm(rng.standard_normal(5), rng.standard_normal(5))
    x = rng.standard_normal((3, 5))
    g = rng.standard_normal((3, 5))
    _, cache = norm.forward(x)
    g_x, grads = norm.backward(g, cache)
    numeric = central_difference(lambda v: np.sum(norm.forward(v)[0] * g), x)
    assert_relative(g_x, numeric, 1e-6)
    numeric_gamma = central_difference(
        lambda gamma: np.sum(LayerNorm(gamma, norm.beta).forward(x)[0] * g), norm.gamma)
    assert_relative(grads["gamma"], numeric_gamma, 1e-6)


def test_mlp_backward(rng):
    mlp = Mlp.init(rng, 4, 6, 3, activation="gelu")
    x = rng.standard_normal((5, 4))
    g = rng.standard_normal((5, 3))
    _, cache = mlp.forward(x)
    g_x, grads = mlp.backward(g, cache)
    assert_relative(g_x, central_difference(lambda v: np.sum(mlp.forward(v)[0] * g), x), 1e-6)
    assert grads["b2"].shape == (3,)


def test_dropout_mask(rng):
    assert dropout_mask(rng, (4, 4), 0.0) is None
    mask = dropout_mask(rng, (200, 50), 0.5)
    assert set(np.unique(mask)) <= {0.0, 2.0}
    assert mask.mean() == pytest.approx(1.0, abs=0.05)
    with pytest.raises(ValueError):
        dropout_mask(rng, (2, 2), 1.0)
    with pytest.raises(ValueError):
        dropout_mask(None, (2, 2), 0.5)


# --- Sequential block ---


def test_block_k0(rng, er_gso):
    params = random_block(rng, 3, 4, 0)
    u = rng.standard_normal((er_gso.n, 3))
    result = block_forward(er_gso, params, make_input_sequence(u, 0))
    np.testing.assert_allclose(result.states[1], u @ params.b)
    np.testing.assert_allclose(result.outputs, params.mlp.forward(u @ params.b)[0])
    np.testing.assert_allclose(unfolded_forward(er_gso, params, make_input_sequence(u, 0)),
                               result.outputs)


def test_block_k1_is_residual_gcn_layer(rng, er_gso):
    c = 4
    w, b = rng.standard_normal((c, c)), rng.standard_normal((2, c))
    params = BlockParams(w, b, Mlp.identity(c), 1)
    u = rng.standard_normal((er_gso.n, 2))
    x1 = u @ params.b
    expected = np.maximum(er_gso.dense() @ x1 @ params.w + x1, 0.0)
    result = block_forward(er_gso, params, make_input_sequence(u, 1))
    np.testing.assert_allclose(result.outputs, expected, atol=1e-12)


def test_block_matches_unfolded(rng, er_gso):
    params = random_block(rng, 3, 8, 5)
    sequence = make_input_sequence(rng.standard_normal((er_gso.n, 3)), 5)
    result = block_forward(er_gso, params, sequence)
    assert_relative(unfolded_state(er_gso, params, sequence), result.states[-1], 1e-10)
    assert_relative(unfolded_forward(er_gso, params, sequence), result.outputs, 1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_block_matches_unfolded_random(seed):
    rng = np.random.default_rng(seed)
    n, c, k = int(rng.integers(2, 65)), int(rng.integers(1, 9)), int(rng.integers(0, 33))
    gso = build_gso(gen_graph("erdos_renyi", n=n, p=0.3, seed=seed, require_connected=True))
    params = random_block(rng, 2, c, k)
    sequence = make_input_sequence(rng.standard_normal((n, 2)), k)
    assert_relative(unfolded_state(gso, params, sequence),
                    block_forward(gso, params, sequence).states[-1], 1e-10)


def test_unfolded_identity_case(rng):
    gso = build_gso(Graph(5, ()))
    c, k = 3, 4
    params = BlockParams(np.eye(c), np.eye(c), Mlp.identity(c, "identity"), k)
    u = rng.standard_normal((5, c))
    np.testing.assert_allclose(unfolded_state(gso, params, make_input_sequence(u, k)),
                               (k + 1) * u)


def test_temporal_decodes_every_state(rng, er_gso):
    params = random_block(rng, 2, 4, 3)
    steps = [rng.standard_normal((er_gso.n, 2)) for _ in range(4)]
    result = block_forward(er_gso, params, make_input_sequence(steps, 3))
    assert len(result.outputs) == 4
    for x, y in zip(result.states[1:], result.outputs):
        np.testing.assert_allclose(y, params.mlp.forward(x)[0])


def test_block_dimension_errors(rng, er_gso):
    params = random_block(rng, 3, 4, 2)
    with pytest.raises(DimensionError):
        block_forward(er_gso, params, make_input_sequence(np.ones((er_gso.n, 2)), 2))
    with pytest.raises(DimensionError):
        block_forward(er_gso, params, make_input_sequence(np.ones((er_gso.n + 1, 3)), 2))
    with pytest.raises(DimensionError):
        block_forward(er_gso, params, make_input_sequence(np.ones((er_gso.n, 3)), 3))


def test_static_state_keeps_input(rng, er_gso):
    c, k = 3, 6
    params = BlockParams(np.eye(c), np.eye(c), Mlp.identity(c), k)
    u = rng.standard_normal((er_gso.n, c))
    a = er_gso.dense()
    expected = sum(np.linalg.matrix_power(a, i) @ u for i in range(k + 1))
    state = block_forward(er_gso, params, make_input_sequence(u, k)).states[-1]
    np.testing.assert_allclose(state, expected, atol=1e-12)
    assert np.linalg.norm(state) > 0


@pytest.mark.parametrize("temporal", [False, True])
def test_block_backward(rng, er_gso, temporal):
    k, c_in = 3, 2
    params = random_block(rng, c_in, 4, k, activation="gelu")
    if temporal:
        u = [rng.standard_normal((er_gso.n, c_in)) for _ in range(k + 1)]
    else:
        u = rng.standard_normal((er_gso.n, c_in))
    sequence = make_input_sequence(u, k)
    result = block_forward(er_gso, params, sequence)
    if temporal:
        g_out = [rng.standard_normal(y.shape) for y in result.outputs]
    else:
        g_out = rng.standard_normal(result.outputs.shape)

    def loss():
        outputs = block_forward(er_gso, params, sequence).outputs
        if temporal:
            return sum(np.sum(y * g) for y, g in zip(outputs, g_out))
        return np.sum(outputs * g_out)

    _, grads = block_backward(er_gso, params, sequence, result, g_out)
    for name in ("w", "b"):
        target = getattr(params, name)

        def f(value, name=name, original=target.copy()):
            setattr(params, name, value)
            try:
                return loss()
            finally:
                setattr(params, name, original)

        assert_relative(grads[name], central_difference(f, target), 1e-6)


def test_block_backward_input_gradient(rng, er_gso):
    params = random_block(rng, 2, 3, 2)
    u = rng.standard_normal((er_gso.n, 2))
    g_out = rng.standard_normal((er_gso.n, 3))
    sequence = make_input_sequence(u, 2)
    result = block_forward(er_gso, params, sequence)
    g_u, _ = block_backward(er_gso, params, sequence, result, g_out)

    def f(v):
        return np.sum(block_forward(er_gso, params, make_input_sequence(v, 2)).outputs * g_out)

    assert_relative(g_u, central_difference(f, u), 1e-6)


# --- GCN baseline ---


def test_gcn_zero_weights(rng, er_gso):
    c = 3
    params = GcnParams([Affine(np.zeros((c, c)), np.zeros(c))], 2, residual=False, shared=True)
    x = rng.standard_normal((er_gso.n, c))
    result = gcn_forward(er_gso, params, x)
    np.testing.assert_array_equal(result.states[1], np.zeros_like(x))
    residual = GcnParams([Affine(np.zeros((c, c)), np.zeros(c))], 1, residual=True, shared=True)
    np.testing.assert_array_equal(gcn_forward(er_gso, residual, x).output, np.maximum(x, 0))
    negative = gcn_forward(er_gso, residual, -np.abs(x) - 1.0).output
    np.testing.assert_array_equal(negative, np.zeros_like(x))


def test_gcn_exposes_states(rng, er_gso):
    params = GcnParams.init(rng, 4, 5)
    result = gcn_forward(er_gso, params, rng.standard_normal((er_gso.n, 4)))
    assert len(result.states) == 6
    assert len(result.pre) == 5


def test_linear_gcn_equals_recurrence(rng, er_gso):
    c, k = 4, 5
    w = rng.standard_normal((c, c)) / 3
    gcn = GcnParams([Affine(w, np.zeros(c))], k, activation="identity", residual=True,
                    shared=True)
    g0 = rng.standard_normal((er_gso.n, c))
    states = gcn_forward(er_gso, gcn, g0).states
    block = BlockParams(w, np.eye(c), Mlp.identity(c, "identity"), k)
    steps = [g0] + states[:k]
    result = block_forward(er_gso, block, make_input_sequence(steps, k))
    for t in range(1, k + 1):
        np.testing.assert_allclose(result.states[t + 1], states[t], atol=1e-12)


def test_gcn_backward(rng, er_gso):
    params = GcnParams.init(rng, 3, 3, activation="tanh", mlp_hidden=4)
    x = rng.standard_normal((er_gso.n, 3))
    g_out = rng.standard_normal((er_gso.n, 3))
    result = gcn_forward(er_gso, params, x)
    g_x, grads = gcn_backward(er_gso, params, result, g_out)
    assert_relative(
        g_x,
        central_difference(lambda v: np.sum(gcn_forward(er_gso, params, v).output * g_out), x),
        1e-6,
    )
    assert set(grads) >= {"layers.0.w", "layers.2.b", "mlp.w1"}


# --- Deep model ---


def _model(variant="mpssm", **kwargs):
    arch = Architecture(c_in=2, hidden=4, k=2, blocks=2, variant=variant, **kwargs)
    return init_deep_model(arch, seed=0)


@pytest.mark.parametrize("variant", VARIANTS)
def test_deep_forward_variants(rng, er_graph, variant):
    model = _model(variant)
    out = deep_forward(model, er_graph, rng.standard_normal((er_graph.n, 2)))
    assert out.shape == (er_graph.n, 1)
    assert np.all(np.isfinite(out))


def test_mean_pooling(rng, er_graph):
    model = _model(pooling="mean")
    assert deep_forward(model, er_graph, rng.standard_normal((er_graph.n, 2))).shape == (1, 1)


def test_deep_forward_is_graph_agnostic_without_edges(rng):
    model = init_deep_model(Architecture(c_in=2, hidden=4, k=1, blocks=3), seed=1)
    graph = Graph(4, ())
    x = rng.standard_normal((4, 2))
    out = deep_forward(model, graph, x)
    for i in range(4):
        single = deep_forward(model, Graph(1, ()), x[i:i + 1])
        np.testing.assert_allclose(out[i], single[0], atol=1e-12)


def test_receptive_field():
    model = _model()
    graph = gen_graph("path", n=10)
    rng = np.random.default_rng(0)
    x = rng.standard_normal((10, 2))
    base = deep_forward(model, graph, x)
    bumped = x.copy()
    bumped[0] += 5.0
    out = deep_forward(model, graph, bumped)
    dist = bfs_oracle(graph).dist[:, 0]
    far = dist > 2 * 2
    np.testing.assert_array_equal(out[far], base[far])
    assert not np.allclose(out[~far], base[~far])


def test_permutation_equivariance(rng, er_graph):
    model = _model()
    x = rng.standard_normal((er_graph.n, 2))
    base = deep_forward(model, er_graph, x)
    for _ in range(10):
        perm = rng.permutation(er_graph.n)
        moved = np.empty_like(x)
        moved[perm] = x
        out = deep_forward(model, er_graph.permute(perm), moved)
        np.testing.assert_allclose(out[perm], base, atol=1e-10)


def test_zero_blocks_leave_residual_path(rng, er_graph):
    model = _model()
    for name, array in named_parameters(model).items():
        if name.startswith("blocks."):
            array[...] = 0.0
    x = rng.standard_normal((er_graph.n, 2))
    expected = model.head.forward(model.encoder.forward(x)[0])[0]
    np.testing.assert_allclose(deep_forward(model, er_graph, x), expected, atol=1e-12)


def test_dropout_only_in_train_mode(rng, er_graph):
    model = _model(dropout=0.5)
    x = rng.standard_normal((er_graph.n, 2))
    first = deep_forward(model, er_graph, x)
    np.testing.assert_array_equal(first, deep_forward(model, er_graph, x))
    with pytest.raises(ValueError):
        deep_forward(model, er_graph, x, train_mode=True)
    trained = deep_forward(model, er_graph, x, train_mode=True, rng=np.random.default_rng(0))
    assert not np.allclose(trained, deep_forward(model, er_graph, x))


def test_deep_forward_dimension_error(er_graph):
    with pytest.raises(DimensionError):
        deep_forward(_model(), er_graph, np.ones((er_graph.n, 3)))


def test_architecture_validation():
    with pytest.raises(ValueError):
        Architecture(c_in=1, variant="transformer")
    with pytest.raises(ValueError):
        Architecture(c_in=1, variant="gcn", implementation="fast-merged")
    with pytest.raises(ValueError):
        Architecture(c_in=1, dropout=1.0)
    with pytest.raises(ValueError):
        Architecture(c_in=1, blocks=0)
    arch = Architecture(c_in=3, k=4)
    assert Architecture.from_dict(arch.to_dict()) == arch


def test_tape_replay(rng, er_graph):
    model = _model(dropout=0.3)
    tape = GradientTape()
    x = rng.standard_normal((er_graph.n, 2))
    out = deep_forward(model, er_graph, x, train_mode=True, rng=rng, tape=tape)
    np.testing.assert_array_equal(tape.replay(model), out)


def test_tape_rejects_other_model(rng, er_graph):
    tape = GradientTape()
    with pytest.raises(TapeError):
        tape.check(())
    deep_forward(_model(), er_graph, rng.standard_normal((er_graph.n, 2)), tape=tape)
    with pytest.raises(TapeError):
        tape.replay(_model(variant="gcn"))


def test_multihop_matches_deep_forward(rng, er_graph):
    arch = Architecture(c_in=2, hidden=4, k=3, blocks=2)
    model = init_deep_model(arch, seed=2)
    model.norms = []
    x = rng.standard_normal((er_graph.n, 2))
    np.testing.assert_allclose(multihop_forward(build_gso(er_graph), model, x),
                               deep_forward(model, er_graph, x), atol=1e-10)
    with pytest.raises(ValueError):
        multihop_forward(build_gso(er_graph), _model(), x)


def test_named_parameters_are_live(er_graph):
    model = _model()
    params = named_parameters(model)
    assert "encoder.w" in params
    assert "blocks.1.mlp.w2" in params
    assert "norms.0.gamma" in params
    params["head.b"][...] = 7.0
    np.testing.assert_array_equal(model.head.b, [7.0])


def test_fast_merged_model(rng, er_graph):
    model = _model(implementation="fast-merged")
    params = named_parameters(model)
    assert np.iscomplexobj(params["blocks.0.sigma"])
    out = deep_forward(model, er_graph, rng.standard_normal((er_graph.n, 2)))
    assert out.shape == (er_graph.n, 1)
