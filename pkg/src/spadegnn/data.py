"""Dataset loading (raw Cora, generic JSON) and seeded train/test splits."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import GraphError, SparseGraph, build_graph


class DataError(ValueError):
    """Malformed or inconsistent dataset input."""


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    graph: SparseGraph
    class_names: tuple[str, ...]
    name: str = "dataset"
    row_normalized: bool = False

    def __post_init__(self):
        n = self.features.shape[0]
        if self.features.ndim != 2:
            raise DataError("features must be a 2-D matrix")
        if len(self.labels) != n or self.graph.n != n:
            raise DataError(
                f"inconsistent sizes: {n} feature rows, {len(self.labels)} labels, {self.graph.n} graph nodes"
            )
        if len(self.class_names) < 2:
            raise DataError("need at least two classes")
        if n and (self.labels.min() < 0 or self.labels.max() >= len(self.class_names)):
            raise DataError("label index outside [0, C)")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def fingerprint(self) -> str:
        """Content hash over features, labels, edges and class names."""
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.features, dtype=np.float64).tobytes())
        h.update(np.ascontiguousarray(self.labels, dtype=np.int64).tobytes())
        h.update(np.ascontiguousarray(self.graph.edges(), dtype=np.int64).tobytes())
        h.update(np.ascontiguousarray(self.graph.edge_weights(), dtype=np.float64).tobytes())
        h.update("\x1f".join(self.class_names).encode())
        h.update(b"rownorm" if self.row_normalized else b"raw")
        return h.hexdigest()

    def with_row_normalization(self) -> "Dataset":
        """Scale every feature row to unit L1 norm (all-zero rows stay zero)."""
        s = np.abs(self.features).sum(axis=1, keepdims=True)
        s[s == 0] = 1.0
        return Dataset(self.features / s, self.labels, self.graph, self.class_names, self.name, True)

    def with_graph(self, graph: SparseGraph) -> "Dataset":
        return Dataset(self.features, self.labels, graph, self.class_names, self.name, self.row_normalized)


@dataclass(frozen=True)
class Split:
    train_ids: np.ndarray
    test_ids: np.ndarray
    seed: int
    per_class_train: int = 0

    def describe(self) -> dict:
        return {
            "protocol": f"{self.per_class_train} train nodes per class, rest test",
            "seed": self.seed,
            "n_train": int(len(self.train_ids)),
            "n_test": int(len(self.test_ids)),
        }


def load_cora(content_path, cites_path, row_normalize: bool = True) -> Dataset:
    """Read the raw LINQS Cora distribution.

    Nodes are indexed in the order they appear in ``cora.content``; class
    indices follow the order in which label strings first appear. Citations
    become undirected unit-weight edges.
    """
    content_path, cites_path = Path(content_path), Path(cites_path)
    for p in (content_path, cites_path):
        if not p.is_file():
            raise FileNotFoundError(f"dataset file not found: {p}")

    ids: dict[str, int] = {}
    rows: list[list[float]] = []
    label_strs: list[str] = []
    width = None
    with open(content_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n\r")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) < 3:
                raise DataError(f"{content_path}:{lineno}: expected id, features, label")
            if width is None:
                width = len(parts)
            elif len(parts) != width:
                raise DataError(f"{content_path}:{lineno}: expected {width} fields, got {len(parts)}")
            pid = parts[0]
            if pid in ids:
                raise DataError(f"{content_path}:{lineno}: duplicate paper id {pid}")
            try:
                rows.append([float(v) for v in parts[1:-1]])
            except ValueError as exc:
                raise DataError(f"{content_path}:{lineno}: non-numeric feature ({exc})") from None
            ids[pid] = len(ids)
            label_strs.append(parts[-1])

    if not ids:
        raise DataError(f"{content_path}: no nodes")
    class_names = tuple(dict.fromkeys(label_strs))
    cls_index = {c: i for i, c in enumerate(class_names)}
    # a one-node file can only name one class; pad so the C >= 2 invariant holds
    if len(class_names) < 2:
        class_names = class_names + ("<unused>",)
    labels = np.array([cls_index[s] for s in label_strs], dtype=np.int64)

    edges = []
    with open(cites_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise DataError(f"{cites_path}:{lineno}: expected '<cited> <citing>'")
            for pid in parts:
                if pid not in ids:
                    raise DataError(f"{cites_path}:{lineno}: unknown paper id {pid}")
            edges.append((ids[parts[0]], ids[parts[1]], 1.0))

    ds = Dataset(
        features=np.asarray(rows, dtype=np.float64),
        labels=labels,
        graph=build_graph(len(ids), edges),
        class_names=class_names,
        name="cora",
    )
    return ds.with_row_normalization() if row_normalize else ds


def load_cora_dir(directory, row_normalize: bool = True) -> Dataset:
    directory = Path(directory)
    return load_cora(directory / "cora.content", directory / "cora.cites", row_normalize)


def _finite_number(x, where: str) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise DataError(f"{where}: expected a number, got {x!r}")
    if not math.isfinite(x):
        raise DataError(f"{where}: NaN/Inf not permitted")
    return float(x)


def parse_generic(obj: dict, name: str = "dataset", row_normalize: bool = False) -> Dataset:
    """Validate a generic dataset object (see :func:`load_generic`)."""
    if not isinstance(obj, dict):
        raise DataError("dataset JSON must be an object")
    for key in ("n", "d", "c", "features", "labels", "edges"):
        if key not in obj:
            raise DataError(f"missing key {key!r}")
    n, d, c = obj["n"], obj["d"], obj["c"]
    for key, v in (("n", n), ("d", d), ("c", c)):
        if isinstance(v, bool) or not isinstance(v, int) or v < 0:
            raise DataError(f"{key!r} must be a non-negative integer")
    if c < 2:
        raise DataError("'c' must be at least 2")
    feats = obj["features"]
    if not isinstance(feats, list) or len(feats) != n:
        raise DataError(f"'features' must hold n={n} rows")
    rows = []
    for i, row in enumerate(feats):
        if not isinstance(row, list) or len(row) != d:
            raise DataError(f"features[{i}] must hold d={d} numbers")
        rows.append([_finite_number(v, f"features[{i}]") for v in row])
    labels = obj["labels"]
    if not isinstance(labels, list) or len(labels) != n:
        raise DataError(f"'labels' must hold n={n} integers")
    for i, lab in enumerate(labels):
        if isinstance(lab, bool) or not isinstance(lab, int) or not 0 <= lab < c:
            raise DataError(f"labels[{i}] = {lab!r} is not a class index in [0, {c})")
    edges = obj["edges"]
    if not isinstance(edges, list):
        raise DataError("'edges' must be an array")
    triples = []
    for k, e in enumerate(edges):
        if not isinstance(e, list) or len(e) != 3:
            raise DataError(f"edges[{k}] must be [i, j, weight]")
        i, j = e[0], e[1]
        if any(isinstance(v, bool) or not isinstance(v, int) for v in (i, j)):
            raise DataError(f"edges[{k}]: endpoints must be integers")
        triples.append((i, j, _finite_number(e[2], f"edges[{k}]")))
    try:
        graph = build_graph(n, triples)
    except GraphError as exc:
        raise DataError(str(exc)) from None
    class_names = obj.get("class_names") or [str(i) for i in range(c)]
    if len(class_names) != c:
        raise DataError("'class_names' length must equal c")
    ds = Dataset(
        features=np.asarray(rows, dtype=np.float64).reshape(n, d),
        labels=np.asarray(labels, dtype=np.int64),
        graph=graph,
        class_names=tuple(str(s) for s in class_names),
        name=name,
    )
    return ds.with_row_normalization() if row_normalize else ds


def load_generic(path, row_normalize: bool = False) -> Dataset:
    """Load a dataset from JSON with keys n, d, c, features, labels, edges.

    ``edges`` is a list of ``[i, j, weight]``; an optional ``class_names``
    list is honoured. NaN and Inf are rejected.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"dataset file not found: {path}")
    try:
        obj = json.loads(path.read_text(encoding="utf-8"), parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from None
    return parse_generic(obj, name=path.stem, row_normalize=row_normalize)


def _reject_constant(token):
    raise DataError(f"non-finite number {token} not permitted")


def to_generic(ds: Dataset) -> dict:
    edges = ds.graph.edges()
    w = ds.graph.edge_weights()
    return {
        "n": ds.n,
        "d": ds.d,
        "c": ds.num_classes,
        "class_names": list(ds.class_names),
        "features": ds.features.tolist(),
        "labels": ds.labels.tolist(),
        "edges": [[int(i), int(j), float(x)] for (i, j), x in zip(edges, w)],
    }


def write_generic(ds: Dataset, path) -> None:
    """Write the canonical JSON form (sorted keys, edges with i < j in sorted order)."""
    text = json.dumps(to_generic(ds), sort_keys=True, allow_nan=False, separators=(",", ":"))
    Path(path).write_text(text + "\n", encoding="utf-8")


def make_split(ds: Dataset, per_class_train: int = 20, seed: int = 0) -> Split:
    """Sample ``per_class_train`` training nodes per class; all other nodes are test nodes."""
    if per_class_train < 1:
        raise DataError("per_class_train must be >= 1")
    counts = np.bincount(ds.labels, minlength=ds.num_classes)
    present = np.flatnonzero(counts)
    short = [int(c) for c in present if counts[c] < per_class_train]
    if short:
        names = ", ".join(f"{ds.class_names[c]} ({counts[c]} nodes)" for c in short)
        raise DataError(f"per_class_train={per_class_train} exceeds class size for: {names}")
    rng = np.random.default_rng(seed)
    train = []
    for c in present:
        members = np.flatnonzero(ds.labels == c)
        train.append(rng.choice(members, size=per_class_train, replace=False))
    train_ids = np.sort(np.concatenate(train))
    mask = np.ones(ds.n, dtype=bool)
    mask[train_ids] = False
    return Split(train_ids, np.flatnonzero(mask), seed, per_class_train)
