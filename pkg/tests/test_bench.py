import pytest

from mpssm.bench import IMPLEMENTATIONS, run_bench
from mpssm.config import load_config


@pytest.fixture
def small_config():
    return load_config(overrides={
        "bench.n": 20,
        "bench.edges": 40,
        "bench.c": 4,
        "bench.ks": [5, 1],
        "bench.repeats": 1,
        "bench.warmup": 0,
    })


def test_small_bench(small_config):
    report = run_bench(small_config, seed=0)
    assert report["ks"] == [1, 5]
    assert report["edges"] == 40
    assert len(report["rows"]) == len(IMPLEMENTATIONS) * 2
    assert set(report["ratios"]) == set(IMPLEMENTATIONS)
    assert all(row["median_ms"] >= 0.0 for row in report["rows"])
    assert report["max_fast_deviation"] < 1e-8


def test_zero_depth_skips_gcn(small_config):
    small_config["bench.ks"] = [0]
    report = run_bench(small_config)
    assert [row["implementation"] for row in report["rows"]] == ["sequential", "fast"]
    assert report["ratios"] == {}


def test_bad_settings(small_config):
    small_config["bench.repeats"] = 0
    with pytest.raises(ValueError):
        run_bench(small_config)


@pytest.mark.slow
def test_fast_path_cost_is_flat_in_depth():
    report = run_bench(load_config(), seed=0)
    assert report["ratios"]["sequential"] > 10 * report["ratios"]["fast"]
    assert report["max_fast_deviation"] < 1e-6
