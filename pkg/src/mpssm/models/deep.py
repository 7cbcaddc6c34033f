"""
Deep stacked models: encoder, ``s`` blocks with heuristics between them, head.

Per block, in order: layer normalisation (pre-norm), the block itself, dropout (train mode only)
and the residual add. Graph-level tasks mean-pool node embeddings before the head.

Every rung of the architecture ablation ladder is a :class:`DeepModel`:

==========================  ===========================================================
variant                     blocks
==========================  ===========================================================
``gcn``                     one ReLU GCN stack of ``k*s`` layers with residual inputs
``linear_gcn``              one linear GCN stack of ``k*s`` untied layers
``linear_gcn_ws``           the same with one shared layer
``block_linear_gcn``        one shared linear stack of ``k*s`` layers followed by an MLP
``multiblock_linear_gcn``   ``s`` shared linear stacks of ``k`` layers, each with an MLP
``mpssm``                   ``s`` recurrent blocks, pre-norm and residual connections
==========================  ===========================================================
"""
from dataclasses import asdict, dataclass, field

import numpy as np

from mpssm import fastscan
from mpssm.exceptions import DimensionError
from mpssm.graphcore import Gso, build_gso
from mpssm.models.block import (
    BlockParams,
    GcnParams,
    block_forward,
    gcn_forward,
    make_input_sequence,
    unfolded_forward,
)
from mpssm.models.layers import FROZEN, Affine, LayerNorm, dropout_mask, named_arrays
from mpssm.models.tape import BlockRecord

VARIANTS = (
    "gcn",
    "linear_gcn",
    "linear_gcn_ws",
    "block_linear_gcn",
    "multiblock_linear_gcn",
    "mpssm",
)
IMPLEMENTATIONS = ("sequential", "fast-merged")
POOLINGS = ("none", "mean")

_diag_cache = None


def default_diag_cache():
    """Process-wide eigendecomposition cache used when no cache is passed explicitly."""
    global _diag_cache
    if _diag_cache is None:
        _diag_cache = fastscan.DiagCache()
    return _diag_cache


@dataclass(frozen=True)
class Architecture:
    c_in: int
    c_out: int = 1
    hidden: int = 20
    k: int = 10
    blocks: int = 2
    mlp_hidden: int = None
    activation: str = "relu"
    dropout: float = 0.0
    variant: str = "mpssm"
    implementation: str = "sequential"
    pooling: str = "none"
    r_min: float = 0.9
    r_max: float = 0.999

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError("unknown variant {!r}; expected one of {}".format(
                self.variant, VARIANTS))
        if self.implementation not in IMPLEMENTATIONS:
            raise ValueError("unknown implementation {!r}; expected one of {}".format(
                self.implementation, IMPLEMENTATIONS))
        if self.implementation != "sequential" and self.variant != "mpssm":
            raise ValueError("the fast implementation only exists for the mpssm variant")
        if self.pooling not in POOLINGS:
            raise ValueError("unknown pooling {!r}".format(self.pooling))
        if self.blocks < 1 or self.k < 0:
            raise ValueError("need blocks >= 1 and k >= 0")
        if self.k == 0 and self.variant != "mpssm":
            raise ValueError("GCN variants need at least one layer (k >= 1)")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1), got {}".format(self.dropout))

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, values):
        return cls(**values)


@dataclass
class DeepModel:
    encoder: Affine
    blocks: list
    head: Affine
    norms: list = field(default_factory=list)
    dropout: float = 0.0
    residual: bool = True
    pooling: str = "none"
    arch: Architecture = field(default=None, metadata=FROZEN)


def _stack(rng, arch, layers, mlp_hidden=None, shared=True):
    return GcnParams.init(
        rng, arch.hidden, layers, activation="identity", residual=False, shared=shared,
        mlp_hidden=mlp_hidden,
    )


def init_deep_model(arch, seed=0):
    """
    :param arch: :class:`Architecture`
    :param seed: initialisation seed; Glorot-uniform dense weights, zero biases
    :rtype: DeepModel
    """
    rng = np.random.default_rng(seed)
    c = arch.hidden
    mlp_hidden = arch.mlp_hidden or c
    encoder = Affine.init(rng, arch.c_in, c)
    norms = []
    residual = False
    depth = arch.k * arch.blocks

    if arch.variant == "mpssm":
        residual = True
        norms = [LayerNorm.init(c) for _ in range(arch.blocks)]
        if arch.implementation == "sequential":
            blocks = [
                BlockParams.init(rng, c, c, mlp_hidden, c, arch.k, arch.activation)
                for _ in range(arch.blocks)
            ]
        else:
            blocks = [
                fastscan.init_merged_params(
                    c, c, mlp_hidden, c, arch.r_min, arch.r_max, k=arch.k,
                    activation=arch.activation, rng=rng,
                )
                for _ in range(arch.blocks)
            ]
    elif arch.variant == "gcn":
        blocks = [GcnParams.init(rng, c, depth, activation="relu", residual=True, shared=False)]
    elif arch.variant == "linear_gcn":
        blocks = [_stack(rng, arch, depth, shared=False)]
    elif arch.variant == "linear_gcn_ws":
        blocks = [_stack(rng, arch, depth)]
    elif arch.variant == "block_linear_gcn":
        blocks = [_stack(rng, arch, depth, mlp_hidden)]
    else:
        blocks = [_stack(rng, arch, arch.k, mlp_hidden) for _ in range(arch.blocks)]

    return DeepModel(
        encoder=encoder,
        blocks=blocks,
        head=Affine.init(rng, c, arch.c_out),
        norms=norms,
        dropout=arch.dropout,
        residual=residual,
        pooling=arch.pooling,
        arch=arch,
    )


def named_parameters(model):
    """:return: ordered ``{dotted name: live array}`` of every trainable parameter"""
    return dict(named_arrays(model))


def model_signature(model):
    return tuple(
        (name, array.shape, array.dtype.str) for name, array in named_arrays(model)
    ) + (len(model.blocks), model.residual, model.pooling)


def _forward_block(gso, block, x, diag_cache):
    if isinstance(block, BlockParams):
        sequence = make_input_sequence(x, block.k)
        result = block_forward(gso, block, sequence)
        return result.outputs, "ssm", (sequence, result)
    if isinstance(block, fastscan.FastBlockParams):
        diag = (diag_cache if diag_cache is not None else default_diag_cache()).get(gso)
        sequence = make_input_sequence(x, block.k)
        cache = {}
        output = fastscan.fast_forward(diag, block, sequence, cache=cache)
        return output, "fast", (diag, cache["fast"])
    if isinstance(block, GcnParams):
        result = gcn_forward(gso, block, x)
        return result.output, "gcn", (result,)
    raise TypeError("unsupported block type {}".format(type(block).__name__))


def deep_forward(
    model, graph, features, train_mode=False, rng=None, tape=None, masks=None, diag_cache=None
):
    """
    :param model: :class:`DeepModel`
    :param graph: :class:`~mpssm.graphcore.Graph` or a prebuilt :class:`~mpssm.graphcore.Gso`
    :param features: ``n x c_in`` node features
    :param train_mode: apply dropout between blocks
    :param rng: ``numpy.random.Generator`` for dropout masks; callers own determinism
    :param tape: optional :class:`~mpssm.models.tape.GradientTape` to record into
    :param masks: dropout masks to reuse instead of drawing new ones (tape replay)
    :param diag_cache: :class:`~mpssm.fastscan.DiagCache` for fast blocks
    :return: ``n x c_out`` predictions, or ``1 x c_out`` with mean pooling
    """
    gso = graph if isinstance(graph, Gso) else build_gso(graph)
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] != gso.n:
        raise DimensionError("features of shape {} do not match a graph of {} nodes".format(
            features.shape, gso.n))
    if not 0.0 <= model.dropout < 1.0:
        raise ValueError("dropout must lie in [0, 1), got {}".format(model.dropout))
    if tape is not None:
        tape.reset(gso, features, model_signature(model), train_mode)

    h, encoder_cache = model.encoder.forward(features)
    for index, block in enumerate(model.blocks):
        norm_cache = None
        z = h
        if model.norms:
            z, norm_cache = model.norms[index].forward(h)
        y, kind, block_cache = _forward_block(gso, block, z, diag_cache)
        if y.shape != h.shape and model.residual:
            raise DimensionError("block {} maps {} to {}; residual needs equal shapes".format(
                index, h.shape, y.shape))
        mask = None
        if train_mode:
            mask = masks[index] if masks is not None else dropout_mask(rng, y.shape, model.dropout)
        if mask is not None:
            y = y * mask
        h = h + y if model.residual else y
        if tape is not None:
            tape.blocks.append(BlockRecord(kind, norm_cache, block_cache, mask, y.shape))

    pooled = model.pooling == "mean"
    if pooled:
        h = h.mean(axis=0, keepdims=True)
    output, head_cache = model.head.forward(h)
    if tape is not None:
        tape.encoder_cache = encoder_cache
        tape.pooled = pooled
        tape.head_cache = head_cache
        tape.output = output
    return output


def multihop_forward(gso, model, features):
    """
    Block-granular closed form of an un-normalised residual model of sequential blocks:
    ``Y_s = Y_{s-1} + MLP_s(sum_i A^i Y_{s-1} B_s W_s^i)``.
    """
    if model.norms or not model.residual:
        raise ValueError("the multi-hop form needs a residual model without normalisation")
    h, _ = model.encoder.forward(np.asarray(features, dtype=np.float64))
    for block in model.blocks:
        if not isinstance(block, BlockParams):
            raise TypeError("the multi-hop form needs sequential recurrent blocks")
        h = h + unfolded_forward(gso, block, make_input_sequence(h, block.k))
    if model.pooling == "mean":
        h = h.mean(axis=0, keepdims=True)
    output, _ = model.head.forward(h)
    return output
