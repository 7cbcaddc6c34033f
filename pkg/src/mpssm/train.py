"""
Reverse-mode gradients, Adam, and the training loop for graph property prediction.

Gradients are computed over the fixed set of operators the models use (dense and sparse matmul,
addition, activations, layer norm, dropout, the diagonal complex scan) from the caches recorded on
a :class:`~mpssm.models.tape.GradientTape`. Complex parameters receive ``dL/dRe + i dL/dIm``, and
the optimizer updates their real and imaginary parts as independent real parameters.
"""
import copy
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from mpssm.exceptions import (
    DivergenceError,
    EmptySplitError,
    NonFiniteGradientError,
    TapeError,
)
from mpssm.fastscan import fast_backward
from mpssm.models.block import block_backward, gcn_backward
from mpssm.models.deep import (
    Architecture,
    deep_forward,
    init_deep_model,
    model_signature,
    named_parameters,
)
from mpssm.models.layers import prefixed
from mpssm.models.tape import GradientTape
from mpssm.utils import log10_mse, record_time

log = logging.getLogger(__name__)

# Union of the grids used for model selection across benchmark families.
HYPERPARAMETER_GRID = {
    "lr": (0.005, 0.003, 0.001, 0.0005, 0.0001),
    "weight_decay": (0.0, 1e-6, 1e-4, 1e-3),
    "dropout": (0.0, 0.4, 0.5, 0.6),
    "k": (1, 2, 4, 5, 8, 10, 16, 20),
    "hidden": (10, 20, 30, 32, 64, 128, 256),
    "blocks": (1, 2, 4, 8, 16),
}


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    weight_decay: float = 0.0
    decoupled: bool = False
    dropout: float = 0.0
    k: int = 10
    hidden: int = 20
    blocks: int = 2
    mlp_hidden: int = None
    activation: str = "relu"
    epochs: int = 100
    batch_size: int = 32
    patience: int = 20
    seed: int = 0
    task: str = "diameter"
    variant: str = "mpssm"
    implementation: str = "sequential"
    r_min: float = 0.9
    r_max: float = 0.999

    @classmethod
    def from_config(cls, config):
        """:param config: dict from :func:`mpssm.config.load_config`"""
        return cls(
            lr=float(config["train.lr"]),
            weight_decay=float(config["train.weight_decay"]),
            decoupled=bool(config["train.decoupled"]),
            dropout=float(config["model.dropout"]),
            k=int(config["model.k"]),
            hidden=int(config["model.hidden"]),
            blocks=int(config["model.blocks"]),
            mlp_hidden=config["model.mlp_hidden"],
            activation=config["model.activation"],
            epochs=int(config["train.epochs"]),
            batch_size=int(config["train.batch_size"]),
            patience=int(config["train.patience"]),
            seed=int(config["seed"]),
            task=config["data.task"],
            variant=config["model.variant"],
            implementation=config["model.implementation"],
            r_min=float(config["fast.r_min"]),
            r_max=float(config["fast.r_max"]),
        )

    def off_grid(self):
        """:return: names of hyperparameters whose value is outside :data:`HYPERPARAMETER_GRID`"""
        return [
            name for name, grid in HYPERPARAMETER_GRID.items()
            if not any(np.isclose(getattr(self, name), value) for value in grid)
        ]

    def architecture(self, c_in, graph_level):
        return Architecture(
            c_in=c_in,
            c_out=1,
            hidden=self.hidden,
            k=self.k,
            blocks=self.blocks,
            mlp_hidden=self.mlp_hidden,
            activation=self.activation,
            dropout=self.dropout,
            variant=self.variant,
            implementation=self.implementation,
            pooling="mean" if graph_level else "none",
            r_min=self.r_min,
            r_max=self.r_max,
        )


# --- Reverse mode ---


def _block_grads(gso, block, record, g):
    if record.kind == "ssm":
        sequence, result = record.block_cache
        return block_backward(gso, block, sequence, result, g)
    if record.kind == "fast":
        diag, cache = record.block_cache
        return fast_backward(diag, block, cache, g)
    (result,) = record.block_cache
    return gcn_backward(gso, block, result, g)


def backward(model, tape, loss_grad):
    """
    :param model: the :class:`~mpssm.models.deep.DeepModel` that recorded ``tape``
    :param tape: :class:`~mpssm.models.tape.GradientTape` from :func:`deep_forward`
    :param loss_grad: gradient of the loss with respect to the model output
    :return: ``{parameter name: gradient}`` for every name in :func:`named_parameters`
    :raises TapeError: if the tape was recorded from a different model
    """
    tape.check(model_signature(model))
    if np.shape(loss_grad) != tape.output.shape:
        raise TapeError("loss gradient has shape {}, output has {}".format(
            np.shape(loss_grad), tape.output.shape))
    grads = {}
    g, head_grads = model.head.backward(np.asarray(loss_grad, dtype=np.float64), tape.head_cache)
    grads.update(prefixed("head", head_grads))
    if tape.pooled:
        n = tape.gso.n
        g = np.repeat(g / n, n, axis=0)

    for index in range(len(model.blocks) - 1, -1, -1):
        record = tape.blocks[index]
        g_y = g if record.mask is None else g * record.mask
        g_z, block_grads = _block_grads(tape.gso, model.blocks[index], record, g_y)
        grads.update(prefixed("blocks.{}".format(index), block_grads))
        if model.norms:
            g_z, norm_grads = model.norms[index].backward(g_z, record.norm_cache)
            grads.update(prefixed("norms.{}".format(index), norm_grads))
        g = g + g_z if model.residual else g_z

    _, encoder_grads = model.encoder.backward(g, tape.encoder_cache)
    grads.update(prefixed("encoder", encoder_grads))

    params = named_parameters(model)
    missing = set(params) - set(grads)
    if missing:
        raise TapeError("no gradient produced for {}".format(sorted(missing)))
    return {name: np.asarray(grads[name], dtype=params[name].dtype) for name in params}


# --- Optimizer ---


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    decoupled: bool = False
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def create(cls, params, **hyper):
        state = cls(**hyper)
        for name, p in params.items():
            state.m[name] = np.zeros(_real_view(p).shape)
            state.v[name] = np.zeros(_real_view(p).shape)
        return state


def _real_view(array):
    array = np.ascontiguousarray(array)
    return array.view(np.float64) if np.iscomplexobj(array) else array


def adam_step(state, params, grads):
    """
    One bias-corrected Adam update, applied in place. With ``decoupled`` the weight decay is
    applied to the parameters directly (AdamW) instead of being added to the gradient.

    :return: ``params`` (the same dict, updated in place)
    :raises NonFiniteGradientError: before touching any parameter if a gradient has NaN/inf
    """
    for name in params:
        if name not in grads or np.shape(grads[name]) != np.shape(params[name]):
            raise ValueError("gradient for {} is missing or mis-shaped".format(name))
        if not np.all(np.isfinite(grads[name])):
            raise NonFiniteGradientError("non-finite gradient for {}".format(name))

    state.step += 1
    correction1 = 1.0 - state.beta1 ** state.step
    correction2 = 1.0 - state.beta2 ** state.step
    for name, p in params.items():
        view = p.view(np.float64) if np.iscomplexobj(p) else p
        g = _real_view(grads[name])
        if state.weight_decay and not state.decoupled:
            g = g + state.weight_decay * view
        m = state.m.setdefault(name, np.zeros(view.shape))
        v = state.v.setdefault(name, np.zeros(view.shape))
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        if state.weight_decay and state.decoupled:
            view -= state.lr * state.weight_decay * view
        view -= state.lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
    return params


# --- Loss and metrics ---


def mse_loss(prediction, target):
    """:return: ``(mean squared error, gradient w.r.t. prediction)``"""
    target = np.asarray(target, dtype=np.float64).reshape(prediction.shape)
    diff = prediction - target
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


def predict(model, record):
    return deep_forward(model, record.graph, record.features).reshape(-1)


@dataclass(frozen=True)
class Metrics:
    mse: float
    log10_mse: float
    count: int

    def to_dict(self):
        return asdict(self)


def evaluate(model, records, task=None):
    """
    Per-record MSE (averaged over nodes for node-level tasks), then averaged over records.

    :param task: accepted for symmetry with the dataset API; the target shape already tells
        graph-level from node-level records
    :raises EmptySplitError: if ``records`` is empty
    """
    records = list(records)
    if not records:
        raise EmptySplitError("cannot evaluate on an empty split")
    errors = []
    for record in records:
        diff = predict(model, record) - record.targets
        errors.append(float(np.mean(diff * diff)))
    mse = float(np.mean(errors))
    return Metrics(mse=mse, log10_mse=log10_mse(mse), count=len(records))


# --- Training loop ---


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_mse: float
    val_mse: float
    log10_val_mse: float
    wall_ms: float

    def to_dict(self):
        return asdict(self)


def _record_gradients(model, record, rng):
    tape = GradientTape()
    output = deep_forward(model, record.graph, record.features, train_mode=True, rng=rng, tape=tape)
    loss, loss_grad = mse_loss(output, record.targets)
    return loss, backward(model, tape, loss_grad)


def train_model(config, dataset):
    """
    Mini-batch Adam on the MSE loss with early stopping on validation MSE.

    :param config: :class:`TrainConfig`
    :param dataset: :class:`~mpssm.graphcore.GppDataset` with train and val records
    :return: ``(model with the best validation MSE, list of EpochRecord)``
    :raises EmptySplitError: if the train or val split is empty
    :raises DivergenceError: if a batch loss becomes non-finite
    """
    train_records, val_records = dataset.split("train"), dataset.split("val")
    if not train_records or not val_records:
        raise EmptySplitError("training needs non-empty train and val splits")
    off_grid = config.off_grid()
    if off_grid:
        log.warning("hyperparameters outside the model-selection grid: %s", ", ".join(off_grid))

    arch = config.architecture(dataset.feature_dim, dataset.graph_level)
    model = init_deep_model(arch, seed=config.seed)
    params = named_parameters(model)
    state = AdamState.create(
        params, lr=config.lr, weight_decay=config.weight_decay, decoupled=config.decoupled
    )
    rng = np.random.default_rng(config.seed)

    history = []
    best_model, best_val, best_epoch = copy.deepcopy(model), np.inf, -1
    for epoch in range(config.epochs):
        with record_time() as timer:
            order = rng.permutation(len(train_records))
            losses = []
            for start in range(0, len(order), config.batch_size):
                batch = [train_records[i] for i in order[start:start + config.batch_size]]
                total = {name: np.zeros_like(p) for name, p in params.items()}
                batch_loss = 0.0
                for record in batch:
                    loss, grads = _record_gradients(model, record, rng)
                    batch_loss += loss
                    for name in total:
                        total[name] += grads[name]
                batch_loss /= len(batch)
                if not np.isfinite(batch_loss):
                    raise DivergenceError(epoch, batch_loss)
                adam_step(state, params, {name: g / len(batch) for name, g in total.items()})
                losses.append(batch_loss * len(batch))
            train_mse = float(np.sum(losses) / len(train_records))
            val = evaluate(model, val_records)
        if not np.isfinite(val.mse):
            raise DivergenceError(epoch, val.mse)

        history.append(EpochRecord(epoch, train_mse, val.mse, val.log10_mse, timer.ms))
        log.info("epoch %d: train_mse=%.5f val_log10_mse=%.4f (%.0f ms)",
                 epoch, train_mse, val.log10_mse, timer.ms)
        if val.mse < best_val:
            best_model, best_val, best_epoch = copy.deepcopy(model), val.mse, epoch
        elif epoch - best_epoch >= config.patience:
            log.warning("early stopping at epoch %d (best epoch %d)", epoch, best_epoch)
            break
    return best_model, history


def ablation_ladder(config, dataset, seeds=(0,), variants=None):
    """
    Train every rung of the architecture ladder with the same budget.

    :return: ``{variant: mean test log10(MSE) over seeds}`` in ladder order
    """
    from dataclasses import replace

    from mpssm.models.deep import VARIANTS

    results = {}
    test_records = dataset.split("test")
    for variant in variants or VARIANTS:
        scores = []
        for seed in seeds:
            run = replace(config, variant=variant, seed=seed, implementation="sequential")
            model, _ = train_model(run, dataset)
            scores.append(evaluate(model, test_records).log10_mse)
        results[variant] = float(np.mean(scores))
        log.info("ablation %s: mean test log10(MSE) %.4f", variant, results[variant])
    return results



def ladder_ordered(scores, baseline="gcn", best="mpssm"):
    """
    Whether mean test log10(MSE) scores follow the ladder: ``baseline`` scores worst and ``best``
    scores best among the variants present.
    """
    if baseline not in scores or best not in scores:
        raise ValueError("ladder scores need both {!r} and {!r}".format(baseline, best))
    others = [value for name, value in scores.items() if name not in (baseline, best)]
    return bool(
        scores[best] < scores[baseline]
        and all(scores[best] <= value <= scores[baseline] for value in others)
    )


# --- Gradient check ---


def _loss_at(model, record):
    output = deep_forward(model, record.graph, record.features)
    return mse_loss(output, record.targets)[0]


def numeric_gradient(model, record, name, h=1e-5):
    """Central differences of the record loss w.r.t. one parameter, one entry at a time."""
    param = named_parameters(model)[name]
    view = param.view(np.float64) if np.iscomplexobj(param) else param
    flat = view.reshape(-1)
    grad = np.zeros_like(flat)
    for index in range(flat.size):
        original = flat[index]
        flat[index] = original + h
        plus = _loss_at(model, record)
        flat[index] = original - h
        minus = _loss_at(model, record)
        flat[index] = original
        grad[index] = (plus - minus) / (2.0 * h)
    grad = grad.reshape(view.shape)
    return grad.view(np.complex128) if np.iscomplexobj(param) else grad


def gradient_check(model, record, h=1e-5, names=None):
    """
    :return: ``{parameter name: relative error}`` between :func:`backward` and central differences
    """
    tape = GradientTape()
    output = deep_forward(model, record.graph, record.features, tape=tape)
    _, loss_grad = mse_loss(output, record.targets)
    analytic = backward(model, tape, loss_grad)
    errors = {}
    for name in names or analytic:
        numeric = numeric_gradient(model, record, name, h=h)
        scale = max(np.linalg.norm(analytic[name]), np.linalg.norm(numeric), 1e-8)
        errors[name] = float(np.linalg.norm(analytic[name] - numeric) / scale)
    return errors
