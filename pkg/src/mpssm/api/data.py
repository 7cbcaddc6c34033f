import csv
import json
import logging

import numpy as np

from mpssm import utils
from mpssm.exceptions import DatasetError, GraphError
from mpssm.graphcore import Graph, GppDataset, GppRecord

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1


# --- Graphs ---


def write_graph(path, graph):
    """Text edge list: a ``n <count>`` header, then one ``i j`` pair per line."""
    with open(path, "w") as f:
        f.write("n {}\n".format(graph.n))
        for i, j in graph.edges:
            f.write("{} {}\n".format(i, j))


def read_graph(path):
    """
    :param path: edge-list file written by :func:`write_graph`; blank lines and ``#`` comments are
        ignored
    :rtype: :class:`~mpssm.graphcore.Graph`
    :raises GraphError: on a missing header or a malformed line
    """
    n, edges = None, []
    with open(path) as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            if n is None:
                if len(tokens) != 2 or tokens[0] != "n" or not tokens[1].isdigit():
                    raise GraphError("{}:{}: expected header 'n <count>'".format(path, lineno))
                n = int(tokens[1])
                continue
            if len(tokens) != 2 or not all(token.isdigit() for token in tokens):
                raise GraphError("{}:{}: expected 'i j', got {!r}".format(path, lineno, line))
            edges.append((int(tokens[0]), int(tokens[1])))
    if n is None:
        raise GraphError("{}: empty graph file".format(path))
    return Graph.from_edges(n, edges)


# --- Datasets ---


def _record_to_dict(record, task):
    return {
        "n": record.graph.n,
        "edges": [list(edge) for edge in record.graph.edges],
        "features": record.features,
        "targets": record.targets,
        "split": record.split,
        "task": task,
        "source": record.source,
    }


def write_dataset(path, dataset):
    """JSON lines, one record per line."""
    with open(path, "w") as f:
        for record in dataset.records:
            f.write(utils.mpssm_json_serializer(_record_to_dict(record, dataset.task)))
            f.write("\n")
    log.info("wrote %d %s record(s) to %s", len(dataset.records), dataset.task, path)


def read_dataset(path):
    """
    :rtype: :class:`~mpssm.graphcore.GppDataset`
    :raises DatasetError: on malformed lines or records of mixed tasks
    """
    tasks, records = set(), []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                graph = Graph.from_edges(row["n"], [tuple(edge) for edge in row["edges"]])
                records.append(GppRecord(
                    graph=graph,
                    features=np.asarray(row["features"], dtype=np.float64).reshape(graph.n, -1),
                    targets=np.asarray(row["targets"], dtype=np.float64).reshape(-1),
                    split=row["split"],
                    source=row.get("source"),
                ))
                tasks.add(row["task"])
            except (KeyError, TypeError, ValueError) as e:
                raise DatasetError("{}:{}: malformed record ({})".format(path, lineno, e))
    if len(tasks) > 1:
        raise DatasetError("{} mixes tasks {}".format(path, sorted(tasks)))
    if not tasks:
        raise DatasetError("{} holds no records".format(path))
    return GppDataset(task=tasks.pop(), records=tuple(records))


# --- Checkpoints ---


def _encode_array(array):
    return {"shape": list(array.shape), "dtype": array.dtype.name, "data": array}


def _decode_array(entry):
    if entry["dtype"].startswith("complex"):
        array = utils.complex_from_pairs(entry["data"])
    else:
        array = np.asarray(entry["data"], dtype=entry["dtype"])
    return array.reshape(entry["shape"])


def write_checkpoint(path, model):
    from mpssm.models.deep import named_parameters

    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "arch": model.arch.to_dict(),
        "params": {name: _encode_array(array) for name, array in named_parameters(model).items()},
    }
    with open(path, "w") as f:
        f.write(utils.mpssm_json_serializer(payload))


def read_checkpoint(path):
    """
    :return: the :class:`~mpssm.models.deep.DeepModel` stored at ``path``
    :raises DatasetError: on an unknown format version or parameters that do not fit the
        stored architecture
    """
    from mpssm.models.deep import Architecture, init_deep_model, named_parameters

    with open(path) as f:
        try:
            payload = json.load(f)
        except ValueError as e:
            raise DatasetError("{}: not a checkpoint ({})".format(path, e))
    version = payload.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise DatasetError("{}: unsupported checkpoint format_version {!r}".format(path, version))

    model = init_deep_model(Architecture.from_dict(payload["arch"]))
    params = named_parameters(model)
    stored = payload["params"]
    if set(stored) != set(params):
        raise DatasetError("{}: parameter names do not match the architecture".format(path))
    for name, target in params.items():
        value = _decode_array(stored[name])
        if value.shape != target.shape:
            raise DatasetError("{}: {} has shape {}, expected {}".format(
                path, name, value.shape, target.shape))
        np.copyto(target, value.astype(target.dtype))
    return model


# --- Eigendecomposition cache ---


def write_diag_cache(path, entries):
    payload = [
        {
            "fingerprint": diag.fingerprint,
            "eigenvalues": diag.eigenvalues,
            "p": diag.p,
        }
        for diag in entries
    ]
    with open(path, "w") as f:
        f.write(utils.mpssm_json_serializer(payload))


def read_diag_cache(path, gso=None):
    """
    :param gso: when given, the file must hold the eigendecomposition of this GSO
    :return: list of :class:`~mpssm.fastscan.DiagGso`
    :raises GraphError: if ``gso`` is given and its fingerprint is not in the file
    """
    from mpssm.fastscan import DiagGso

    with open(path) as f:
        payload = json.load(f)
    entries = [
        DiagGso(
            eigenvalues=np.asarray(entry["eigenvalues"], dtype=np.float64),
            p=np.asarray(entry["p"], dtype=np.float64),
            fingerprint=entry["fingerprint"],
        )
        for entry in payload
    ]
    if gso is not None and gso.fingerprint not in {diag.fingerprint for diag in entries}:
        raise GraphError("{} holds no eigendecomposition for graph {}".format(
            path, gso.fingerprint[:12]))
    return entries


# --- Reports ---


def write_history(path, history):
    with open(path, "w") as f:
        for record in history:
            f.write(utils.mpssm_json_serializer(record.to_dict()))
            f.write("\n")


def write_report_json(path, report):
    with open(path, "w") as f:
        f.write(utils.mpssm_json_serializer(report, indent=2, sort_keys=True))
        f.write("\n")


def _cell(value):
    if isinstance(value, float):
        return "{:.6g}".format(value)
    return str(value)


def format_report_text(rows, columns=None):
    """
    :param rows: list of dicts
    :param columns: column order; defaults to the keys of the first row
    :return: a left-aligned plain-text table
    """
    if not rows:
        return ""
    columns = columns or list(rows[0])
    cells = [[_cell(row.get(column, "")) for column in columns] for row in rows]
    widths = [
        max(len(column), *(len(line[index]) for line in cells))
        for index, column in enumerate(columns)
    ]
    lines = ["  ".join(column.ljust(width) for column, width in zip(columns, widths)).rstrip()]
    lines.extend(
        "  ".join(cell.ljust(width) for cell, width in zip(line, widths)).rstrip()
        for line in cells
    )
    return "\n".join(lines)


def write_sensitivity_csv(path, report):
    """
    One ``i,j,delta,sensitivity`` row per node pair of an all-pairs
    :class:`~mpssm.sensitivity.SensitivityReport`.
    """
    if report.pairs is None:
        raise ValueError("the sensitivity report was sampled; the per-pair CSV needs all pairs")
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["i", "j", "delta", "sensitivity"])
        n = report.pairs.shape[0]
        for i in range(n):
            for j in range(n):
                writer.writerow([i, j, report.delta, repr(float(report.pairs[i, j]))])
