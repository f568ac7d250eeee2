"""CSV and JSON files read and written by the CLI.

Points CSV: header ``x0,...,x{d-1}[,label][,weight]``, UTF-8, floats in
shortest round-trip form. A missing weight column means uniform weights.

Topology JSON::

    {"branches": [[0, 1, 2], ...], "fixed": [0, 2],
     "fixed_positions": {"0": [x, y, z], "2": [x, y, z]}}

Every write goes to ``<path>.tmp`` first and is moved into place with
os.replace(), so readers never see a half-written file.
"""

import csv
import json
import os
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from rwmeans.errors import InvalidArgumentError
from rwmeans.measures import EmpiricalMeasure
from rwmeans.regularizers import CurveTopology

PathLike = Union[str, Path]


def format_value(value: Any) -> str:
    """Serialize a cell: floats via repr (exact round trip), ints and bools as ints."""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if value is None:
        return ""
    return str(value)


# ---------------------------------------------------------------------------
# Atomic writes
# ---------------------------------------------------------------------------


def _atomic_write_text(path: PathLike, text: str) -> None:
    path = os.path.abspath(path)
    os.makedirs(os.path.dirname(path), exist_ok=True)
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as f:
        f.write(text)
    os.replace(tmp, path)


def write_csv(path: PathLike, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    """Write a header plus rows with ``\\n`` line endings."""
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(format_value(v) for v in row))
    _atomic_write_text(path, "\n".join(lines) + "\n")


def write_json(path: PathLike, data: Any) -> None:
    """Pretty-printed JSON with sorted keys and a trailing newline."""
    _atomic_write_text(
        path, json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n"
    )


def load_json(path: PathLike) -> Any:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError:
        raise InvalidArgumentError(f"file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise InvalidArgumentError(f"{path}: invalid JSON ({e})") from None


# ---------------------------------------------------------------------------
# Points CSV
# ---------------------------------------------------------------------------


def points_header(dim: int, labels: bool, weights: bool) -> List[str]:
    header = [f"x{c}" for c in range(dim)]
    if labels:
        header.append("label")
    if weights:
        header.append("weight")
    return header


def write_points_csv(
    path: PathLike,
    points: np.ndarray,
    labels: Optional[np.ndarray] = None,
    weights: Optional[np.ndarray] = None,
) -> None:
    points = np.asarray(points, dtype=float)
    header = points_header(points.shape[1], labels is not None, weights is not None)
    rows = []
    for i in range(points.shape[0]):
        row: List[Any] = [float(v) for v in points[i]]
        if labels is not None:
            row.append(int(labels[i]))
        if weights is not None:
            row.append(float(weights[i]))
        rows.append(row)
    write_csv(path, header, rows)


def write_measure_csv(path: PathLike, measure: EmpiricalMeasure) -> None:
    write_points_csv(path, measure.points, measure.labels, measure.weights)


def _parse_header(header: List[str], path: PathLike) -> Tuple[int, Optional[int], Optional[int]]:
    names = [h.strip() for h in header]
    dim = 0
    while dim < len(names) and names[dim] == f"x{dim}":
        dim += 1
    if dim == 0:
        raise InvalidArgumentError(f"{path}: header must start with x0")
    label_col = weight_col = None
    for col in range(dim, len(names)):
        if names[col] == "label" and label_col is None:
            label_col = col
        elif names[col] == "weight" and weight_col is None:
            weight_col = col
        else:
            raise InvalidArgumentError(f"{path}: unexpected column {names[col]!r}")
    return dim, label_col, weight_col


def read_points_csv(path: PathLike) -> EmpiricalMeasure:
    """Parse a points CSV into a measure (weights normalized)."""
    try:
        with open(path, "r", encoding="utf-8", newline="") as f:
            rows = [row for row in csv.reader(f) if row]
    except FileNotFoundError:
        raise InvalidArgumentError(f"file not found: {path}") from None
    if len(rows) < 2:
        raise InvalidArgumentError(f"{path}: needs a header and at least one row")
    dim, label_col, weight_col = _parse_header(rows[0], path)
    width = len(rows[0])
    points = np.empty((len(rows) - 1, dim))
    labels = np.empty(len(rows) - 1, dtype=np.int64) if label_col is not None else None
    weights = np.empty(len(rows) - 1) if weight_col is not None else None
    for i, row in enumerate(rows[1:]):
        line = i + 2
        if len(row) != width:
            raise InvalidArgumentError(
                f"{path}:{line}: expected {width} fields, got {len(row)}"
            )
        try:
            points[i] = [float(v) for v in row[:dim]]
            if labels is not None:
                labels[i] = int(row[label_col])
            if weights is not None:
                weights[i] = float(row[weight_col])
        except ValueError as e:
            raise InvalidArgumentError(f"{path}:{line}: {e}") from None
    if weights is None:
        weights = np.full(points.shape[0], 1.0 / points.shape[0])
    try:
        return EmpiricalMeasure(points=points, weights=weights, labels=labels)
    except InvalidArgumentError as e:
        raise InvalidArgumentError(f"{path}: {e}") from None


# ---------------------------------------------------------------------------
# Topology JSON
# ---------------------------------------------------------------------------


def _is_index(value: Any) -> bool:
    # JSON true/false decode to bool, a subclass of int
    return isinstance(value, int) and not isinstance(value, bool)


def parse_topology(data: Any, source: str = "topology") -> Tuple[CurveTopology, Dict[int, np.ndarray]]:
    """Build a topology and its pinned positions from decoded JSON."""
    if not isinstance(data, dict):
        raise InvalidArgumentError(f"{source}: expected a JSON object")
    branches = data.get("branches")
    if not isinstance(branches, list) or not all(
        isinstance(b, list) and all(_is_index(i) for i in b) for b in branches
    ):
        raise InvalidArgumentError(f"{source}: 'branches' must be lists of node indices")
    fixed = data.get("fixed", [])
    if not isinstance(fixed, list) or not all(_is_index(i) for i in fixed):
        raise InvalidArgumentError(f"{source}: 'fixed' must be a list of node indices")
    raw_positions = data.get("fixed_positions", {})
    if not isinstance(raw_positions, dict):
        raise InvalidArgumentError(f"{source}: 'fixed_positions' must be an object")
    positions: Dict[int, np.ndarray] = {}
    for key, value in raw_positions.items():
        try:
            node = int(key)
            coords = np.asarray(value, dtype=float)
        except (TypeError, ValueError):
            raise InvalidArgumentError(
                f"{source}: bad fixed position for node {key!r}"
            ) from None
        if coords.shape != (3,) or not np.all(np.isfinite(coords)):
            raise InvalidArgumentError(
                f"{source}: fixed position of node {key} must be 3 finite numbers"
            )
        positions[node] = coords
    missing = sorted(set(fixed) - set(positions))
    if missing:
        raise InvalidArgumentError(f"{source}: fixed nodes {missing} lack positions")
    unpinned = sorted(set(positions) - set(fixed))
    if unpinned:
        raise InvalidArgumentError(
            f"{source}: fixed_positions given for nodes {unpinned} not listed in 'fixed'"
        )
    try:
        topology = CurveTopology(branches=branches, fixed_nodes=frozenset(fixed))
    except InvalidArgumentError as e:
        raise InvalidArgumentError(f"{source}: {e}") from None
    return topology, {i: positions[i] for i in sorted(fixed)}


def read_topology_json(path: PathLike) -> Tuple[CurveTopology, Dict[int, np.ndarray]]:
    return parse_topology(load_json(path), str(path))
