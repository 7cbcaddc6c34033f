"""
Flat JSON configuration with dotted keys.

Every key the package understands is listed in :data:`DEFAULT_CONFIG`. A config file is a single
JSON object that may set any subset of these keys; ``key=value`` overrides (from ``--set`` on the
command line) are applied on top of the file. Values are parsed as JSON literals when possible, so
``train.lr=0.003`` yields a float and ``data.split=[0.8,0.1,0.1]`` a list, and fall back to plain
strings otherwise (``model.variant=gcn``).
"""
import json
import logging

from mpssm.exceptions import ConfigError

log = logging.getLogger(__name__)

DEFAULT_CONFIG = {
    "seed": 0,
    # --- data ---
    "data.task": "diameter",
    "data.count": 500,
    "data.n_min": 25,
    "data.n_max": 35,
    "data.split": [0.7, 0.15, 0.15],
    "data.edge_prob_min": 0.1,
    "data.edge_prob_max": 0.3,
    # --- model ---
    "model.variant": "mpssm",
    "model.implementation": "sequential",
    "model.k": 10,
    "model.hidden": 20,
    "model.blocks": 2,
    "model.mlp_hidden": None,
    "model.activation": "relu",
    "model.dropout": 0.0,
    # --- fast path ---
    "fast.r_min": 0.9,
    "fast.r_max": 0.999,
    # --- training ---
    "train.lr": 1e-3,
    "train.weight_decay": 0.0,
    "train.decoupled": False,
    "train.epochs": 100,
    "train.batch_size": 32,
    "train.patience": 20,
    # --- verification suite ---
    "verify.deep_delta": 200,
    "verify.bottleneck_delta": 5000,
    "verify.vanish_k": 16,
    "verify.vanish_width": 128,
    "verify.vanish_trials": 20,
    "verify.train_seeds": 3,
    # --- runtime comparison ---
    "bench.n": 100,
    "bench.edges": 3058,
    "bench.c": 32,
    "bench.ks": [10, 100, 1000],
    "bench.repeats": 5,
    "bench.warmup": 2,
}


def parse_value(text):
    try:
        return json.loads(text)
    except ValueError:
        return text


def parse_override(item):
    """
    :param item: a ``key=value`` string
    :return: ``(key, parsed value)``
    """
    key, sep, value = item.partition("=")
    key = key.strip()
    if not sep or not key:
        raise ConfigError("override {!r} is not of the form key=value".format(item))
    return key, parse_value(value.strip())


def _check_keys(keys, source):
    unknown = sorted(set(keys) - set(DEFAULT_CONFIG))
    if unknown:
        raise ConfigError("unknown config key(s) in {}: {}".format(source, ", ".join(unknown)))


def load_config(path=None, overrides=()):
    """
    :param path: optional path to a JSON config file
    :param overrides: iterable of ``key=value`` strings, or a dict of already parsed values;
        overrides win over file values, which win over :data:`DEFAULT_CONFIG`
    :return: a complete config dict
    """
    config = dict(DEFAULT_CONFIG)
    if path is not None:
        try:
            with open(path) as f:
                file_values = json.load(f)
        except (OSError, ValueError) as e:
            raise ConfigError("cannot read config {}: {}".format(path, e))
        if not isinstance(file_values, dict):
            raise ConfigError("config {} must hold a JSON object".format(path))
        _check_keys(file_values, path)
        config.update(file_values)

    if isinstance(overrides, dict):
        parsed = dict(overrides)
    else:
        parsed = dict(parse_override(item) for item in overrides)
    _check_keys(parsed, "overrides")
    config.update(parsed)
    log.debug("loaded config with %d override(s)", len(parsed))
    return config
