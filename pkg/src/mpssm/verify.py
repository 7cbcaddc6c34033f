"""
The property suite run by ``mpssm verify``.

Each check is a function ``check(config, seed) -> list of CheckResult`` registered in
:data:`CHECKS`. Checks never raise on a failed property; they report it. Errors raised by the
library itself (bad shapes, non-convergence) propagate.
"""
import logging
from dataclasses import replace

import numpy as np

from mpssm import fastscan
from mpssm.exceptions import UsageError, VerificationError
from mpssm.graphcore import bfs_oracle, build_gso, gen_gpp_dataset, gen_graph
from mpssm.models.block import BlockParams, block_forward, make_input_sequence, unfolded_forward
from mpssm.models.deep import Architecture, deep_forward, init_deep_model
from mpssm.sensitivity import (
    CheckResult,
    bottleneck_report,
    deep_regime_convergence,
    jacobian_error,
    sensitivity_profile,
    vanishing_rate_experiment,
    verify_spectrum_lemma,
)
from mpssm.utils import derive_seed, record_time

log = logging.getLogger(__name__)

JACOBIAN_TOL = 1e-4
EQUIVALENCE_TOL = 1e-5
TIGHTNESS_TOL = 1e-12
BOTTLENECK_TOL = 0.15
VANISHING_BAND = (-0.65, -0.35)
GRADIENT_TOL = 1e-4
EQUIVARIANCE_TOL = 1e-10
TRAINING_MARGIN = 0.5


def _connected_graph(rng, n_min, n_max):
    n = int(rng.integers(n_min, n_max + 1))
    p = float(rng.uniform(0.2, 0.5))
    return gen_graph("erdos_renyi", n=n, p=p, seed=int(rng.integers(2 ** 32)),
                     require_connected=True)


def _scaled_weight(rng, c, radius=0.95):
    w = rng.standard_normal((c, c)) / np.sqrt(c)
    return w * (radius / max(np.max(np.abs(np.linalg.eigvals(w))), 1e-12))


def _orthogonal(rng, c):
    q, r = np.linalg.qr(rng.standard_normal((c, c)))
    return q * np.sign(np.diag(r))


# --- Checks ---


def check_jacobian(config, seed):
    worst = 0.0
    for trial in range(10):
        rng = np.random.default_rng(derive_seed(seed, trial))
        graph = _connected_graph(rng, 3, 12)
        c = int(rng.integers(1, 7))
        delta = int(rng.integers(0, 9))
        i, j = (int(x) for x in rng.integers(graph.n, size=2))
        w = _scaled_weight(rng, c)
        worst = max(worst, jacobian_error(build_gso(graph), w, i, j, delta, seed=trial))
    return [CheckResult("jacobian", worst < JACOBIAN_TOL, {"max_relative_error": worst})]


def check_spectrum(config, seed):
    failures = {}
    for trial in range(20):
        rng = np.random.default_rng(derive_seed(seed, trial))
        gso = build_gso(_connected_graph(rng, 2, 50))
        for result in verify_spectrum_lemma(gso, ts=(1, 8, 64)):
            if not result.passed:
                failures.setdefault(result.name, result.detail)
    return [CheckResult("spectrum", not failures, {"failed": failures})]


def _equivalence_deviation(rng, temporal):
    graph = _connected_graph(rng, 2, 64)
    c = int(rng.integers(1, 17))
    k = int(rng.integers(0, 33))
    c_in = int(rng.integers(1, 5))
    params = BlockParams.init(rng, c_in, c, c, c, k)
    params.w = _scaled_weight(rng, c)
    if temporal:
        u = [rng.standard_normal((graph.n, c_in)) for _ in range(k + 1)]
    else:
        u = rng.standard_normal((graph.n, c_in))
    sequence = make_input_sequence(u, k)
    gso = build_gso(graph)

    sequential = block_forward(gso, params, sequence).outputs
    if temporal:
        sequential = sequential[-1]
    unfolded = unfolded_forward(gso, params, sequence)
    fast = fastscan.fast_forward(
        fastscan.precompute_gso_eig(gso), fastscan.to_exact_fast(params), sequence
    )
    return max(
        float(np.max(np.abs(unfolded - sequential))),
        float(np.max(np.abs(fast - sequential))),
    )


def check_equivalence(config, seed):
    worst = {"static": 0.0, "temporal": 0.0}
    for trial in range(20):
        for mode in worst:
            rng = np.random.default_rng(derive_seed(seed, trial, mode == "temporal"))
            worst[mode] = max(worst[mode], _equivalence_deviation(rng, mode == "temporal"))
    passed = max(worst.values()) < EQUIVALENCE_TOL
    return [CheckResult("equivalence", passed, {"max_abs_deviation": worst})]


def check_global_bound(config, seed):
    failures, worst_margin, reports = [], np.inf, 0
    for trial in range(20):
        rng = np.random.default_rng(derive_seed(seed, trial))
        graph = _connected_graph(rng, 2, 20)
        for draw in range(5):
            c = int(rng.integers(1, 6))
            w = rng.standard_normal((c, c)) / np.sqrt(c)
            for delta in range(65):
                report = sensitivity_profile(graph, w, delta)
                reports += 1
                if not report.pass_global:
                    failures.append({"trial": trial, "draw": draw, "c": c, "delta": delta})
                if report.bound_global > 0:
                    margin = (report.s_global - report.bound_global) / report.bound_global
                    worst_margin = min(worst_margin, margin)

    k3 = gen_graph("cycle", n=3)
    tightness = max(
        abs(sensitivity_profile(k3, np.eye(2), delta).s_global - 1.0 / 3.0)
        for delta in range(1, 65)
    )
    return [
        CheckResult("global_bound", not failures, {
            "reports": reports,
            "failures": failures[:10],
            "min_relative_margin": float(worst_margin),
        }),
        CheckResult("global_bound_tight_k3", tightness <= TIGHTNESS_TOL,
                    {"max_gap": float(tightness)}),
    ]


def check_min_bound(config, seed):
    delta = int(config["verify.deep_delta"])
    literal, deep, ratios = [], [], []
    for trial in range(10):
        rng = np.random.default_rng(derive_seed(seed, trial))
        graph = _connected_graph(rng, 4, 30)
        report = sensitivity_profile(graph, _orthogonal(rng, 3), delta)
        literal.append(report.pass_min)
        deep.append(report.pass_min_deep)
        convergence = deep_regime_convergence(graph)
        ratios.append(convergence.passed)

    bottleneck = bottleneck_report(6, 10, int(config["verify.bottleneck_delta"]))
    return [
        CheckResult("min_bound", all(deep), {
            "delta": delta, "literal_passes": int(sum(literal)), "graphs": len(deep)}),
        CheckResult("deep_regime", all(ratios), {"graphs_within_tolerance": int(sum(ratios))}),
        CheckResult(
            "clique_chain",
            abs(bottleneck.factor - 3.0 / 625.0) <= 1e-15
            and bottleneck.relative_gap <= BOTTLENECK_TOL,
            dict(bottleneck.to_dict(), tolerance=BOTTLENECK_TOL),
        ),
    ]


def check_vanishing(config, seed):
    rng = np.random.default_rng(derive_seed(seed, 0))
    graph = _connected_graph(rng, 20, 30)
    rate = vanishing_rate_experiment(
        graph,
        int(config["verify.vanish_k"]),
        width=int(config["verify.vanish_width"]),
        trials=int(config["verify.vanish_trials"]),
        seed=seed,
    )
    lo, hi = VANISHING_BAND
    return [CheckResult("vanishing", lo <= rate <= hi, {"rate": rate, "band": [lo, hi]})]


def check_gradients(config, seed):
    from mpssm.train import gradient_check

    dataset = gen_gpp_dataset("diameter", 1, n_range=(10, 10), seed=seed,
                              split_fractions=(1.0, 0.0, 0.0))
    record = dataset.records[0]
    results = []
    for implementation in ("sequential", "fast-merged"):
        arch = Architecture(c_in=1, hidden=4, k=3, blocks=2, activation="gelu",
                            implementation=implementation, pooling="mean")
        errors = gradient_check(init_deep_model(arch, seed=seed), record)
        worst = max(errors.values())
        results.append(CheckResult("gradients_{}".format(implementation.replace("-", "_")),
                                   worst < GRADIENT_TOL, {"max_relative_error": worst}))
    return results


def check_locality(config, seed):
    rng = np.random.default_rng(derive_seed(seed, 0))
    k, blocks = 2, 2
    graph = gen_graph("path", n=12)
    model = init_deep_model(Architecture(c_in=2, hidden=4, k=k, blocks=blocks), seed=seed)
    features = rng.standard_normal((graph.n, 2))
    base = deep_forward(model, graph, features)
    dist = bfs_oracle(graph).dist
    leaked = 0
    for j in (0, graph.n - 1):
        bumped = features.copy()
        bumped[j] += 1.0
        changed = np.any(deep_forward(model, graph, bumped) != base, axis=1)
        leaked += int(np.sum(changed & (dist[:, j] > k * blocks)))

    equivariance = 0.0
    er = _connected_graph(rng, 8, 16)
    er_features = rng.standard_normal((er.n, 2))
    er_base = deep_forward(model, er, er_features)
    for _ in range(10):
        perm = rng.permutation(er.n)
        moved = np.empty_like(er_features)
        moved[perm] = er_features
        out = deep_forward(model, er.permute(perm), moved)
        equivariance = max(equivariance, float(np.max(np.abs(out[perm] - er_base))))
    return [
        CheckResult("receptive_field", leaked == 0, {"leaked_nodes": leaked,
                                                     "hops": k * blocks}),
        CheckResult("equivariance", equivariance <= EQUIVARIANCE_TOL,
                    {"max_abs_deviation": equivariance}),
    ]


def _training_dataset(config, seed):
    return gen_gpp_dataset(
        "diameter",
        int(config["data.count"]),
        n_range=(int(config["data.n_min"]), int(config["data.n_max"])),
        seed=seed,
        split_fractions=config["data.split"],
        edge_prob=(float(config["data.edge_prob_min"]), float(config["data.edge_prob_max"])),
    )


def check_training(config, seed):
    from mpssm.train import TrainConfig, evaluate, train_model

    dataset = _training_dataset(config, seed)
    base = TrainConfig.from_config(config)
    scores = {}
    for variant in ("gcn", "mpssm"):
        values = []
        for index in range(int(config["verify.train_seeds"])):
            run = replace(base, variant=variant, implementation="sequential",
                          seed=derive_seed(seed, index))
            model, _ = train_model(run, dataset)
            values.append(evaluate(model, dataset.split("test")).log10_mse)
        scores[variant] = float(np.mean(values))
    gap = scores["gcn"] - scores["mpssm"]
    return [CheckResult("training", gap >= TRAINING_MARGIN, {"log10_mse": scores, "gap": gap})]


def check_ladder(config, seed):
    from mpssm.train import TrainConfig, ablation_ladder, ladder_ordered

    dataset = _training_dataset(config, seed)
    seeds = [derive_seed(seed, index) for index in range(int(config["verify.train_seeds"]))]
    scores = ablation_ladder(TrainConfig.from_config(config), dataset, seeds=seeds)
    return [CheckResult("ladder", ladder_ordered(scores), {"log10_mse": scores})]


CHECKS = {
    "jacobian": check_jacobian,
    "spectrum": check_spectrum,
    "equivalence": check_equivalence,
    "global_bound": check_global_bound,
    "min_bound": check_min_bound,
    "vanishing": check_vanishing,
    "gradients": check_gradients,
    "locality": check_locality,
    "training": check_training,
    "ladder": check_ladder,
}
# Opt-in: these run full training experiments.
TRAINING_CHECKS = ("training", "ladder")
DEFAULT_CHECKS = tuple(name for name in CHECKS if name not in TRAINING_CHECKS)


def run_suite(config, seed=0, only=None):
    """
    :param only: iterable of check names from :data:`CHECKS`; defaults to :data:`DEFAULT_CHECKS`
    :return: report dict ``{"seed", "passed", "checks": [{name, passed, seconds, detail}]}``
    :raises UsageError: on an unknown check name
    """
    names = list(only) if only else list(DEFAULT_CHECKS)
    unknown = [name for name in names if name not in CHECKS]
    if unknown:
        raise UsageError("unknown check(s) {}; expected some of {}".format(
            ", ".join(unknown), ", ".join(CHECKS)))

    rows = []
    for name in names:
        with record_time() as timer:
            results = CHECKS[name](config, seed)
        for result in results:
            rows.append({
                "name": result.name,
                "passed": bool(result.passed),
                "seconds": round(timer.elapsed, 3),
                "detail": result.detail,
            })
            log.info("%s: %s (%.1f s)", result.name, "ok" if result.passed else "FAILED",
                     timer.elapsed)
    return {"seed": seed, "passed": all(row["passed"] for row in rows), "checks": rows}


def raise_for_failures(report):
    """:raises VerificationError: listing the failed checks of a :func:`run_suite` report"""
    failed = [row["name"] for row in report["checks"] if not row["passed"]]
    if failed:
        raise VerificationError(failed)
