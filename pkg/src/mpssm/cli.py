"""
``mpssm`` command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 failed verification checks,
3 any other runtime error.
"""
import argparse
import json
import logging
import os
import sys

import numpy as np

from mpssm.api import data
from mpssm.config import load_config
from mpssm.exceptions import ConfigError, MpssmError, UsageError, VerificationError
from mpssm.utils import mpssm_json_serializer

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VERIFICATION = 2
EXIT_RUNTIME = 3

WEIGHT_KINDS = ("identity", "orthogonal", "random")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError("{}\n{}".format(message, self.format_usage().strip()))


def _common():
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("-v", "--verbose", action="count", default=0,
                        help="-v for progress, -vv for debug output")
    parent.add_argument("--config", help="JSON config file with dotted keys")
    parent.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override one config key (repeatable)")
    parent.add_argument("--seed", type=int, help="root seed (overrides the config)")
    return parent


def build_parser():
    common = _common()
    parser = _Parser(prog="mpssm", description="MP-SSM graph models and their property checks")
    commands = parser.add_subparsers(dest="command", parser_class=_Parser)
    commands.required = True

    gen = commands.add_parser("gen-data", parents=[common], help="generate a GPP dataset")
    gen.add_argument("--task", help="diameter, sssp or eccentricity")
    gen.add_argument("--count", type=int, help="number of graphs")
    gen.add_argument("--out", default="dataset.jsonl")

    train = commands.add_parser("train", parents=[common], help="train one model or the ladder")
    train.add_argument("--data", help="JSON-lines dataset; generated from the config if omitted")
    train.add_argument("--variant", help="architecture ladder rung")
    train.add_argument("--implementation", choices=("sequential", "fast-merged"))
    train.add_argument("--ablation", action="store_true",
                       help="train every ladder rung and report test log10(MSE)")
    train.add_argument("--out", default="run", help="output directory")

    evaluate = commands.add_parser("eval", parents=[common], help="evaluate a checkpoint")
    evaluate.add_argument("--checkpoint", required=True)
    evaluate.add_argument("--data", required=True)
    evaluate.add_argument("--split", default="test", choices=("train", "val", "test"))

    verify = commands.add_parser("verify", parents=[common], help="run the property suite")
    verify.add_argument("--only", help="comma-separated check names")
    verify.add_argument("--report", help="write the JSON report here")

    bench = commands.add_parser("bench", parents=[common], help="inference time against depth")
    bench.add_argument("--ks", help="comma-separated depths")
    bench.add_argument("--n", type=int, help="number of nodes")
    bench.add_argument("--out", help="write the JSON report here")

    jacobian = commands.add_parser("jacobian", parents=[common],
                                   help="per-pair sensitivity CSV")
    source = jacobian.add_mutually_exclusive_group(required=True)
    source.add_argument("--graph", help="edge-list file")
    source.add_argument("--kind", help="generated graph kind")
    jacobian.add_argument("--n", type=int)
    jacobian.add_argument("--p", type=float)
    jacobian.add_argument("--m", type=int)
    jacobian.add_argument("--d", type=int)
    jacobian.add_argument("--delta", type=int, required=True)
    jacobian.add_argument("--channels", type=int, default=4)
    jacobian.add_argument("--weight", choices=WEIGHT_KINDS, default="identity")
    jacobian.add_argument("--out", default="sensitivity.csv")
    return parser


def _load(args):
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append("seed={}".format(args.seed))
    return load_config(args.config, overrides)


def _set(config, key, value):
    if value is not None:
        config[key] = value


# --- Commands ---


def _dataset_from_config(config):
    from mpssm.graphcore import gen_gpp_dataset

    return gen_gpp_dataset(
        config["data.task"],
        int(config["data.count"]),
        n_range=(int(config["data.n_min"]), int(config["data.n_max"])),
        seed=int(config["seed"]),
        split_fractions=config["data.split"],
        edge_prob=(float(config["data.edge_prob_min"]), float(config["data.edge_prob_max"])),
    )


def cmd_gen_data(args, config):
    _set(config, "data.task", args.task)
    _set(config, "data.count", args.count)
    dataset = _dataset_from_config(config)
    data.write_dataset(args.out, dataset)
    print("wrote {} {} records to {}".format(len(dataset.records), dataset.task, args.out))
    return EXIT_OK


def cmd_train(args, config):
    from mpssm.train import TrainConfig, ablation_ladder, evaluate, train_model

    _set(config, "model.variant", args.variant)
    _set(config, "model.implementation", args.implementation)
    dataset = data.read_dataset(args.data) if args.data else _dataset_from_config(config)
    config["data.task"] = dataset.task
    train_config = TrainConfig.from_config(config)
    os.makedirs(args.out, exist_ok=True)

    if args.ablation:
        seeds = list(range(int(config["verify.train_seeds"])))
        results = ablation_ladder(train_config, dataset, seeds=seeds)
        rows = [{"variant": name, "test_log10_mse": value} for name, value in results.items()]
        data.write_report_json(os.path.join(args.out, "ablation.json"), rows)
        print(data.format_report_text(rows))
        return EXIT_OK

    model, history = train_model(train_config, dataset)
    data.write_history(os.path.join(args.out, "history.jsonl"), history)
    data.write_checkpoint(os.path.join(args.out, "checkpoint.json"), model)
    metrics = evaluate(model, dataset.split("test"))
    print(json.dumps(metrics.to_dict(), sort_keys=True))
    return EXIT_OK


def cmd_eval(args, config):
    from mpssm.train import evaluate

    model = data.read_checkpoint(args.checkpoint)
    dataset = data.read_dataset(args.data)
    metrics = evaluate(model, dataset.split(args.split), dataset.task)
    print(json.dumps(metrics.to_dict(), sort_keys=True))
    return EXIT_OK


def _check_note(detail):
    """``delta=... tolerance=...`` for checks evaluated at a fixed depth."""
    return " ".join(
        "{}={}".format(key, detail[key]) for key in ("delta", "tolerance") if key in detail
    )


def cmd_verify(args, config):
    from mpssm.verify import raise_for_failures, run_suite

    only = [name.strip() for name in args.only.split(",")] if args.only else None
    report = run_suite(config, seed=int(config["seed"]), only=only)
    if args.report:
        data.write_report_json(args.report, report)
    print(data.format_report_text(
        [{"check": row["name"], "passed": row["passed"], "seconds": row["seconds"],
          "note": _check_note(row.get("detail") or {})}
         for row in report["checks"]],
        ["check", "passed", "seconds", "note"],
    ))
    raise_for_failures(report)
    return EXIT_OK


def _int_list(text):
    try:
        return [int(item) for item in text.split(",") if item.strip()]
    except ValueError:
        raise UsageError("expected comma-separated integers, got {!r}".format(text))


def cmd_bench(args, config):
    from mpssm.bench import run_bench

    if args.ks:
        config["bench.ks"] = _int_list(args.ks)
    _set(config, "bench.n", args.n)
    report = run_bench(config, seed=int(config["seed"]))
    if args.out:
        data.write_report_json(args.out, report)
    print(data.format_report_text(report["rows"], ["implementation", "k", "median_ms"]))
    for name, ratio in sorted(report["ratios"].items()):
        print("{}: t(k={})/t(k={}) = {:.2f}".format(
            name, max(report["ks"]), min(report["ks"]), ratio))
    return EXIT_OK


def _weight(kind, c, seed):
    rng = np.random.default_rng(seed)
    if kind == "identity":
        return np.eye(c)
    if kind == "orthogonal":
        q, r = np.linalg.qr(rng.standard_normal((c, c)))
        return q * np.sign(np.diag(r))
    return rng.standard_normal((c, c)) / np.sqrt(c)


def cmd_jacobian(args, config):
    from mpssm.graphcore import gen_graph
    from mpssm.sensitivity import sensitivity_profile

    seed = int(config["seed"])
    if args.graph:
        graph = data.read_graph(args.graph)
    else:
        try:
            graph = gen_graph(args.kind, seed=seed, n=args.n, p=args.p, m=args.m, d=args.d)
        except ValueError as e:
            raise UsageError(str(e))
    report = sensitivity_profile(graph, _weight(args.weight, args.channels, seed), args.delta)
    data.write_sensitivity_csv(args.out, report)
    print(mpssm_json_serializer(report.to_dict(), sort_keys=True))
    return EXIT_OK


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "verify": cmd_verify,
    "bench": cmd_bench,
    "jacobian": cmd_jacobian,
}


def main(argv=None):
    """
    :param argv: argument list without the program name; defaults to ``sys.argv[1:]``
    :return: process exit code
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(
            level=[logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)],
            format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        )
        config = _load(args)
        return COMMANDS[args.command](args, config)
    except (UsageError, ConfigError) as e:
        print("mpssm: error: {}".format(e), file=sys.stderr)
        return EXIT_USAGE
    except VerificationError as e:
        print("mpssm: {} check(s) failed: {}".format(len(e.failed), ", ".join(e.failed)),
              file=sys.stderr)
        return EXIT_VERIFICATION
    except (MpssmError, ValueError, OSError) as e:
        log.debug("command failed", exc_info=True)
        print("mpssm: {}: {}".format(type(e).__name__, e), file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
