"""
Inference-time comparison of one block at growing depth ``k``: the sequential recurrence, the
diagonalised fast path with a cached eigendecomposition, and GCN stacks of ``k`` tanh layers
with untied (``gcn``) or shared (``gcn_ws``) weights.
"""
import logging
import statistics

import numpy as np

from mpssm import fastscan
from mpssm.graphcore import build_gso, gen_graph
from mpssm.models.block import (
    BlockParams,
    GcnParams,
    block_forward,
    gcn_forward,
    make_input_sequence,
)
from mpssm.utils import derive_seed, record_time

log = logging.getLogger(__name__)

IMPLEMENTATIONS = ("sequential", "fast", "gcn", "gcn_ws")
WEIGHT_RADIUS = 0.95


def _median_ms(run, repeats, warmup):
    for _ in range(warmup):
        run()
    timings = []
    for _ in range(repeats):
        with record_time() as timer:
            run()
        timings.append(timer.ms)
    return statistics.median(timings)


def _recurrent_block(rng, c, k):
    params = BlockParams.init(rng, c, c, c, c, k)
    radius = np.max(np.abs(np.linalg.eigvals(params.w)))
    params.w = params.w * (WEIGHT_RADIUS / radius)
    return params


def run_bench(config, seed=0):
    """
    :param config: dict from :func:`mpssm.config.load_config` (``bench.*`` keys)
    :return: report dict with one row per (implementation, k), the per-implementation ratio
        ``t(max k) / t(min k)`` and the largest fast/sequential output deviation
    """
    n, c = int(config["bench.n"]), int(config["bench.c"])
    ks = sorted(int(k) for k in config["bench.ks"])
    repeats, warmup = int(config["bench.repeats"]), int(config["bench.warmup"])
    if repeats < 1 or warmup < 0 or not ks:
        raise ValueError("need repeats >= 1, warmup >= 0 and at least one k")

    graph = gen_graph("gnm", n=n, edges=int(config["bench.edges"]), seed=seed,
                      require_connected=True)
    gso = build_gso(graph)
    diag = fastscan.DiagCache().get(gso)
    features = np.random.default_rng(seed).standard_normal((n, c))

    rows, deviation = [], 0.0
    for k in ks:
        rng = np.random.default_rng(derive_seed(seed, k))
        params = _recurrent_block(rng, c, k)
        fast = fastscan.to_exact_fast(params)
        sequence = make_input_sequence(features, k)
        gcn = GcnParams.init(rng, c, k, activation="tanh", residual=False)
        gcn_ws = GcnParams.init(rng, c, k, activation="tanh", residual=False, shared=True)

        expected = block_forward(gso, params, sequence).outputs
        deviation = max(deviation, float(np.max(np.abs(
            fastscan.fast_forward(diag, fast, sequence) - expected))))

        runs = {
            "sequential": lambda: block_forward(gso, params, make_input_sequence(features, k)),
            "fast": lambda: fastscan.fast_forward(diag, fast, make_input_sequence(features, k)),
            "gcn": lambda: gcn_forward(gso, gcn, features),
            "gcn_ws": lambda: gcn_forward(gso, gcn_ws, features),
        }
        for name in IMPLEMENTATIONS:
            if k == 0 and name.startswith("gcn"):
                continue
            median = _median_ms(runs[name], repeats, warmup)
            rows.append({"implementation": name, "k": k, "median_ms": median})
            log.info("%-10s k=%-5d %.3f ms", name, k, median)

    ratios = {}
    for name in IMPLEMENTATIONS:
        by_k = {row["k"]: row["median_ms"] for row in rows if row["implementation"] == name}
        if len(by_k) >= 2:
            ratios[name] = by_k[max(by_k)] / max(by_k[min(by_k)], 1e-9)
    return {
        "n": n,
        "edges": graph.num_edges,
        "c": c,
        "ks": ks,
        "repeats": repeats,
        "warmup": warmup,
        "rows": rows,
        "ratios": ratios,
        "max_fast_deviation": deviation,
    }
