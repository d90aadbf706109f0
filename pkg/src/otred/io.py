"""Plain-text formats used by the command line tool.

* matrices (cost, plan): comma-separated rows, no header
* marginals: one value per line
* graphs: header ``n_left n_right`` then one ``i j`` edge per line, 0-indexed
* reports: JSON with a ``schema`` version field
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .graphs import BipartiteGraph, Matching


class FormatError(ValidationError):
    """A file could not be parsed."""


def _lines(path):
    text = Path(path).read_text()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line


def _number(token: str, path, lineno: int) -> float:
    try:
        return float(token)
    except ValueError:
        raise FormatError(f"{path}:{lineno}: not a number: {token!r}") from None


def read_matrix(path) -> np.ndarray:
    rows = []
    for lineno, line in _lines(path):
        rows.append([_number(tok.strip(), path, lineno) for tok in line.split(",")])
    if not rows:
        raise FormatError(f"{path}: empty matrix file")
    width = len(rows[0])
    if any(len(row) != width for row in rows):
        raise FormatError(f"{path}: rows have different lengths")
    return np.array(rows, dtype=float)


def read_vector(path) -> np.ndarray:
    values = []
    for lineno, line in _lines(path):
        toks = [t for t in line.replace(",", " ").split() if t]
        values.extend(_number(t, path, lineno) for t in toks)
    if not values:
        raise FormatError(f"{path}: empty vector file")
    return np.array(values, dtype=float)


def format_float(x: float) -> str:
    """Shortest decimal string that round-trips to the same double."""
    return repr(float(x))


def matrix_to_csv(X: np.ndarray) -> str:
    return "".join(",".join(format_float(v) for v in row) + "\n" for row in np.asarray(X))


def write_matrix(path, X: np.ndarray) -> None:
    Path(path).write_text(matrix_to_csv(X))


def read_graph(path) -> BipartiteGraph:
    lines = list(_lines(path))
    if not lines:
        raise FormatError(f"{path}: empty graph file")

    def ints(lineno, line):
        parts = line.split()
        if len(parts) != 2:
            raise FormatError(f"{path}:{lineno}: expected two integers, got {line!r}")
        try:
            return int(parts[0]), int(parts[1])
        except ValueError:
            raise FormatError(f"{path}:{lineno}: expected two integers, got {line!r}") from None

    n_left, n_right = ints(*lines[0])
    edges = [ints(lineno, line) for lineno, line in lines[1:]]
    return BipartiteGraph.from_edges(n_left, n_right, edges)


def write_graph(path, G: BipartiteGraph) -> None:
    body = "".join(f"{i} {j}\n" for i, j in G.edges())
    Path(path).write_text(f"{G.n_left} {G.n_right}\n{body}")


def matching_to_text(M: Matching) -> str:
    return "".join(f"{i} {j}\n" for i, j in M.sorted_edges())


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def write_report(path, data: dict) -> None:
    Path(path).write_text(json.dumps(_json_safe(data), indent=2, sort_keys=True) + "\n")
