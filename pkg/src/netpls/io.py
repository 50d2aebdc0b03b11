"""File formats: dense matrix CSVs, edge lists, covariate manifests and JSON.

Matrices are written without a header using 17 significant digits so that
a save/load cycle reproduces every float exactly.  Node covariate files are
single-column CSVs with a header row.  A manifest is a CSV with columns
``name, level, kind, path`` (``level`` is ``node`` or ``edge``, ``kind`` is
``quantitative`` or ``categorical``); paths are relative to the manifest.
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    AsymmetricAdjacencyError,
    DimensionMismatchError,
    InputError,
    MissingValueError,
    SelfLoopError,
)
from .simulate import edge_covariates_from_nodes

log = logging.getLogger(__name__)

MATRIX_FMT = "%.17g"
MANIFEST_FIELDS = ("name", "level", "kind", "path")
SYMMETRY_WARN = 1e-8


def save_matrix(path, M) -> None:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    np.savetxt(path, M, fmt=MATRIX_FMT, delimiter=",")


def load_matrix(path) -> np.ndarray:
    try:
        M = np.loadtxt(path, delimiter=",", ndmin=2, dtype=float)
    except ValueError as exc:
        raise InputError(f"{path}: not a numeric CSV matrix ({exc})") from exc
    except OSError as exc:
        raise InputError(f"{path}: {exc}") from exc
    if np.isnan(M).any():
        raise MissingValueError(f"{path}: matrix contains missing values")
    return M


def _looks_like_edge_list(M) -> bool:
    # A valid dense 2x2 adjacency is [[0, a], [a, 0]]; an edge list row always
    # holds a node index >= 2 because self-loops are not allowed.
    return M.shape[1] == 2 and (M.shape[0] != 2 or M.max() >= 2)


def edge_list_to_adjacency(edges, n: int | None = None, source="edge list") -> np.ndarray:
    """Adjacency from 1-indexed ``(i, j)`` pairs; duplicates collapse."""
    E = np.asarray(edges, dtype=float).reshape(-1, 2)
    if E.size and (np.any(E != np.round(E)) or E.min() < 1):
        raise InputError(f"{source}: node indices must be positive integers")
    E = E.astype(int) - 1
    if np.any(E[:, 0] == E[:, 1]):
        i = int(E[E[:, 0] == E[:, 1]][0, 0]) + 1
        raise SelfLoopError(f"{source}: self-loop at node {i}")
    size = int(E.max()) + 1 if E.size else 0
    n = size if n is None else n
    if size > n:
        raise DimensionMismatchError(f"{source}: node index {size} exceeds n={n}")
    A = np.zeros((n, n))
    A[E[:, 0], E[:, 1]] = 1.0
    A[E[:, 1], E[:, 0]] = 1.0
    return A


def validate_adjacency(A, source="adjacency", require_binary=True) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatchError(f"{source}: adjacency must be square, got {A.shape}")
    if np.isnan(A).any():
        raise MissingValueError(f"{source}: adjacency contains missing values")
    if np.any(A != A.T):
        i, j = np.argwhere(A != A.T)[0]
        raise AsymmetricAdjacencyError(f"{source}: A[{i + 1},{j + 1}] != A[{j + 1},{i + 1}]")
    if np.any(np.diag(A) != 0):
        i = int(np.flatnonzero(np.diag(A))[0])
        raise SelfLoopError(f"{source}: nonzero diagonal entry at node {i + 1}")
    if require_binary and not np.all((A == 0) | (A == 1)):
        raise InputError(f"{source}: adjacency entries must be 0 or 1")
    return A


def load_adjacency(path, fmt: str = "auto", n: int | None = None):
    """Load a dense 0/1 CSV or a 1-indexed ``i,j`` edge list.

    Returns
    -------
    A : ndarray
    fmt : str
        The format actually used (``dense`` or ``edgelist``).
    """
    M = load_matrix(path)
    if fmt == "auto":
        fmt = "edgelist" if _looks_like_edge_list(M) else "dense"
    if fmt == "edgelist":
        if M.shape[1] != 2:
            raise DimensionMismatchError(f"{path}: edge list needs two columns, got {M.shape[1]}")
        A = edge_list_to_adjacency(M, n, source=str(path))
    elif fmt == "dense":
        A = validate_adjacency(M, source=str(path))
        if n is not None and A.shape[0] != n:
            raise DimensionMismatchError(f"{path}: adjacency has {A.shape[0]} nodes, expected {n}")
    else:
        raise InputError(f"unknown adjacency format {fmt!r}")
    return A, fmt


def load_node_values(path, kind: str):
    """Values of a single-column node covariate file with a header row."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InputError(f"{path}: {exc}") from exc
    if len(rows) < 2:
        raise InputError(f"{path}: expected a header row and at least one value")
    values = [r[0].strip() if r else "" for r in rows[1:]]
    if any(len(r) > 1 for r in rows):
        raise DimensionMismatchError(f"{path}: node covariate files hold a single column")
    if any(v == "" or v.lower() in ("na", "nan") for v in values):
        raise MissingValueError(f"{path}: missing node covariate value")
    if kind == "categorical":
        return np.array(values, dtype=object)
    try:
        return np.array([float(v) for v in values])
    except ValueError as exc:
        raise InputError(f"{path}: non-numeric quantitative value ({exc})") from exc


def save_node_values(path, name: str, values) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([name])
        for v in values:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v])


def read_manifest(path) -> list:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise InputError(f"{path}: {exc}") from exc
    for k, row in enumerate(rows):
        missing = [f for f in MANIFEST_FIELDS if not (row.get(f) or "").strip()]
        if missing:
            raise InputError(f"{path}: row {k + 1} lacks {', '.join(missing)}")
        row = {f: row[f].strip() for f in MANIFEST_FIELDS}
        if row["level"] not in ("node", "edge"):
            raise InputError(f"{path}: row {k + 1} has unknown level {row['level']!r}")
        if row["kind"] not in ("quantitative", "categorical"):
            raise InputError(f"{path}: row {k + 1} has unknown kind {row['kind']!r}")
        rows[k] = row
    names = [r["name"] for r in rows]
    if len(set(names)) != len(names):
        raise InputError(f"{path}: duplicate covariate names")
    return rows


def write_manifest(path, entries) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=MANIFEST_FIELDS, lineterminator="\n")
        w.writeheader()
        for e in entries:
            w.writerow({f: e[f] for f in MANIFEST_FIELDS})


@dataclass
class Dataset:
    """Adjacency plus edge covariates and a record of how they were built.

    ``node_values`` keeps the raw values of node-level covariates so the
    dataset can be written back in its original form.
    """

    adjacency: np.ndarray
    edge_covariates: np.ndarray
    covariate_names: list
    provenance: dict = field(default_factory=dict)
    node_values: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def p(self) -> int:
        return self.edge_covariates.shape[0]


def _symmetrize(M, source):
    gap = float(np.max(np.abs(M - M.T))) if M.size else 0.0
    if gap > SYMMETRY_WARN:
        log.warning("%s: edge covariate asymmetric by %.3g, averaged with its transpose", source, gap)
    return 0.5 * (M + M.T), gap


def load_dataset(adjacency_path, covariate_spec_path=None, adjacency_format="auto") -> Dataset:
    """Assemble a dataset from an adjacency file and a covariate manifest.

    Node covariates become edge covariates through
    :func:`edge_covariates_from_nodes`; edge covariates are symmetrized and
    their diagonal, which lies outside the model, is set to zero.
    """
    entries = read_manifest(covariate_spec_path) if covariate_spec_path else []
    base = Path(covariate_spec_path).parent if covariate_spec_path else Path(".")
    mats, names, node_values, steps = [], [], {}, []
    n = None
    for e in entries:
        src = base / e["path"]
        if e["level"] == "node":
            values = load_node_values(src, e["kind"])
            node_values[e["name"]] = (e["kind"], values)
            M = edge_covariates_from_nodes(values, e["kind"])
            how = "absolute difference" if e["kind"] == "quantitative" else "equality indicator"
            steps.append(f"{e['name']}: node {e['kind']} -> edge via {how}")
        else:
            M = load_matrix(src)
            if M.shape[0] != M.shape[1]:
                raise DimensionMismatchError(f"{src}: edge covariate must be square, got {M.shape}")
            M, gap = _symmetrize(M, src)
            if np.any(np.diag(M) != 0):
                steps.append(f"{e['name']}: diagonal set to zero")
                np.fill_diagonal(M, 0.0)
            steps.append(f"{e['name']}: edge {e['kind']} loaded" +
                         (f", symmetrized (max asymmetry {gap:.3g})" if gap > 0 else ""))
        if n is not None and M.shape[0] != n:
            raise DimensionMismatchError(f"{src}: covariate covers {M.shape[0]} nodes, expected {n}")
        n = M.shape[0]
        mats.append(M)
        names.append(e["name"])
    A, fmt = load_adjacency(adjacency_path, adjacency_format, n if adjacency_format != "dense" else None)
    if n is not None and A.shape[0] != n:
        raise DimensionMismatchError(f"adjacency has {A.shape[0]} nodes, covariates have {n}")
    X = np.stack(mats) if mats else np.zeros((0, A.shape[0], A.shape[0]))
    provenance = {
        "adjacency": {"path": Path(adjacency_path).name, "format": fmt},
        "covariates": [dict(e) for e in entries],
        "construction": steps,
    }
    return Dataset(A, X, names, provenance, node_values)


def save_dataset(ds: Dataset, out_dir) -> tuple:
    """Write adjacency, covariate files and manifest; returns their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    adj = out / "adjacency.csv"
    save_matrix(adj, ds.adjacency)
    entries = []
    for name, M in zip(ds.covariate_names, ds.edge_covariates):
        if name in ds.node_values:
            kind, values = ds.node_values[name]
            fname = f"node_{name}.csv"
            save_node_values(out / fname, name, values)
            entries.append(dict(name=name, level="node", kind=kind, path=fname))
        else:
            kind = next((c["kind"] for c in ds.provenance.get("covariates", []) if c["name"] == name),
                        "quantitative")
            fname = f"edge_{name}.csv"
            save_matrix(out / fname, M)
            entries.append(dict(name=name, level="edge", kind=kind, path=fname))
    manifest = out / "manifest.csv"
    write_manifest(manifest, entries)
    return adj, manifest


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(to_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"{path}: {exc}") from exc


def write_assignments(path, labels, nodes=None) -> None:
    """Two-column CSV ``node,cluster`` with 1-based node ids and labels."""
    labels = np.asarray(labels, dtype=int)
    nodes = np.arange(labels.size) if nodes is None else np.asarray(nodes)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node", "cluster"])
        for i, z in zip(nodes, labels):
            w.writerow([int(i) + 1, int(z) + 1])


def read_assignments(path) -> np.ndarray:
    """Zero-based labels in node order from a ``node,cluster`` file."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise InputError(f"{path}: {exc}") from exc
    try:
        pairs = sorted((int(r["node"]), int(r["cluster"])) for r in rows)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{path}: expected integer columns node,cluster") from exc
    nodes = [p[0] for p in pairs]
    if nodes != list(range(1, len(nodes) + 1)):
        raise InputError(f"{path}: node ids must be 1..n without gaps")
    return np.array([p[1] for p in pairs]) - 1
