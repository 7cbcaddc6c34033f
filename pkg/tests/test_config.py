import json

import pytest

from mpssm.config import DEFAULT_CONFIG, load_config, parse_override, parse_value
from mpssm.exceptions import ConfigError
from mpssm.train import TrainConfig


@pytest.mark.parametrize(
    "text, expected",
    [
        ("0.003", 0.003),
        ("10", 10),
        ("true", True),
        ("null", None),
        ("[0.8, 0.1, 0.1]", [0.8, 0.1, 0.1]),
        ("gcn", "gcn"),
        ("fast-merged", "fast-merged"),
    ],
)
def test_parse_value(text, expected):
    assert parse_value(text) == expected


def test_parse_override():
    assert parse_override(" train.lr = 0.005 ") == ("train.lr", 0.005)
    for item in ("train.lr", "=3"):
        with pytest.raises(ConfigError):
            parse_override(item)


def test_defaults():
    config = load_config()
    assert config == DEFAULT_CONFIG
    assert config is not DEFAULT_CONFIG


def test_file_and_overrides(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"model.k": 4, "train.lr": 0.005}))
    config = load_config(str(path), ["model.k=8", "model.variant=gcn"])
    assert config["model.k"] == 8
    assert config["train.lr"] == 0.005
    assert config["model.variant"] == "gcn"
    assert config["model.hidden"] == DEFAULT_CONFIG["model.hidden"]


def test_dict_overrides():
    assert load_config(overrides={"seed": 5})["seed"] == 5


def test_unknown_keys(tmp_path):
    with pytest.raises(ConfigError):
        load_config(overrides=["model.depth=3"])
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"train.momentum": 0.9}))
    with pytest.raises(ConfigError):
        load_config(str(path))


@pytest.mark.parametrize("content", ["[1, 2]", "{not json"])
def test_bad_file(tmp_path, content):
    path = tmp_path / "config.json"
    path.write_text(content)
    with pytest.raises(ConfigError):
        load_config(str(path))


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "absent.json"))


def test_train_config_from_config():
    config = load_config(overrides=["train.lr=0.005", "model.blocks=4", "model.dropout=0.5"])
    train_config = TrainConfig.from_config(config)
    assert train_config.lr == 0.005
    assert train_config.blocks == 4
    assert train_config.dropout == 0.5
    assert train_config.off_grid() == []
    arch = train_config.architecture(c_in=1, graph_level=True)
    assert arch.pooling == "mean"
    assert arch.k == 10
