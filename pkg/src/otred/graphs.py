"""Bipartite graph and matching containers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import DimensionMismatch, ValidationError


@dataclass(frozen=True)
class BipartiteGraph:
    """Bipartite graph stored as a boolean ``n_left x n_right`` adjacency matrix."""

    n_left: int
    n_right: int
    adjacency: np.ndarray

    def __post_init__(self):
        adj = np.array(self.adjacency, dtype=bool, copy=True)
        if adj.shape != (self.n_left, self.n_right):
            raise DimensionMismatch(
                f"adjacency shape {adj.shape} != ({self.n_left}, {self.n_right})"
            )
        adj.setflags(write=False)
        object.__setattr__(self, "adjacency", adj)

    @classmethod
    def from_edges(cls, n_left: int, n_right: int, edges: Iterable[tuple[int, int]]):
        if n_left < 0 or n_right < 0:
            raise ValidationError("vertex counts must be nonnegative")
        adj = np.zeros((n_left, n_right), dtype=bool)
        for i, j in edges:
            if not (0 <= i < n_left and 0 <= j < n_right):
                raise ValidationError(f"edge ({i}, {j}) references a missing vertex")
            adj[i, j] = True
        return cls(n_left, n_right, adj)

    def edges(self) -> list[tuple[int, int]]:
        return [(int(i), int(j)) for i, j in zip(*np.nonzero(self.adjacency))]

    def neighbors(self) -> list[list[int]]:
        """Right-neighbours of each left vertex, in increasing order."""
        return [np.flatnonzero(row).tolist() for row in self.adjacency]

    @property
    def n_edges(self) -> int:
        return int(self.adjacency.sum())

    def padded(self) -> "BipartiteGraph":
        """Square copy with isolated vertices added to the smaller side."""
        n = max(self.n_left, self.n_right)
        if self.n_left == self.n_right:
            return self
        adj = np.zeros((n, n), dtype=bool)
        adj[: self.n_left, : self.n_right] = self.adjacency
        return BipartiteGraph(n, n, adj)


@dataclass(frozen=True)
class Matching:
    edges: frozenset
    size: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "edges", frozenset((int(i), int(j)) for i, j in self.edges))
        object.__setattr__(self, "size", len(self.edges))

    def is_valid(self, G: BipartiteGraph) -> bool:
        lefts = [i for i, _ in self.edges]
        rights = [j for _, j in self.edges]
        if len(set(lefts)) != len(lefts) or len(set(rights)) != len(rights):
            return False
        return all(
            0 <= i < G.n_left and 0 <= j < G.n_right and G.adjacency[i, j] for i, j in self.edges
        )

    def sorted_edges(self) -> list[tuple[int, int]]:
        return sorted(self.edges)


@dataclass(frozen=True)
class FractionalMatching:
    weights: np.ndarray
    value: float = field(init=False)

    def __post_init__(self):
        w = np.array(self.weights, dtype=float, copy=True)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "value", float(w.sum()))
