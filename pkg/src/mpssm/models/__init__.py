from .layers import Affine, LayerNorm, Mlp, activation, named_arrays  # noqa
from .block import (  # noqa
    BlockParams,
    GcnParams,
    NodeSequence,
    block_backward,
    block_forward,
    gcn_backward,
    gcn_forward,
    make_input_sequence,
    unfolded_forward,
    unfolded_state,
)
from .tape import GradientTape  # noqa
from .deep import (  # noqa
    Architecture,
    DeepModel,
    deep_forward,
    init_deep_model,
    model_signature,
    multihop_forward,
    named_parameters,
)
