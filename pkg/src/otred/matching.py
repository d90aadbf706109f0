"""Maximum-cardinality bipartite matching solved through optimal transport.

The graph becomes a transport instance with uniform marginals ``1/n`` and
cost 0 on edges, 1 elsewhere. An ``eps``-optimal plan, scaled by ``n`` and
restricted to edges, is a fractional matching worth at least
``OPT - n eps``. Rounding it to an integral matching and finishing with
augmenting paths gives a maximum matching.
"""

from __future__ import annotations

import logging
import math
import time
from collections import deque
from typing import Optional

import numpy as np

from .core import SolveReport, TransportInstance, as_matrix, validate_instance
from .errors import InvalidEpsilon, NotACoupling, UnbalancedSides, ValidationError
from .graphs import BipartiteGraph, FractionalMatching, Matching
from .packing import solve_ot_via_packing
from .scaling import solve_ot_via_scaling

logger = logging.getLogger(__name__)

SNAP = 1e-12


def matching_to_ot(G: BipartiteGraph, pad: bool = True) -> TransportInstance:
    """0/1 cost instance with uniform marginals.

    Unequal sides are padded with isolated vertices unless ``pad=False``.
    """
    if G.n_left != G.n_right:
        if not pad:
            raise UnbalancedSides(f"{G.n_left} left vs {G.n_right} right vertices")
        G = G.padded()
    n = G.n_left
    if n < 1:
        raise ValidationError("graph needs at least one vertex per side")
    C = np.where(G.adjacency, 0.0, 1.0)
    u = np.full(n, 1.0 / n)
    return validate_instance(C, u, u)


def extract_fractional_matching(X, G: BipartiteGraph, tol: float = 1e-8) -> FractionalMatching:
    """``n X`` with the mass on non-edges removed."""
    X = as_matrix(X)
    n = X.shape[0]
    if X.shape != (n, n) or G.n_left > n or G.n_right > n:
        raise NotACoupling(f"plan shape {X.shape} does not fit a graph on {G.n_left}+{G.n_right} vertices")
    if np.any(X < 0):
        raise NotACoupling("plan has negative entries")
    target = 1.0 / n
    dev = np.abs(X.sum(axis=1) - target).sum() + np.abs(X.sum(axis=0) - target).sum()
    if dev > tol:
        raise NotACoupling(f"plan marginals deviate from 1/n by {dev:.3g}")
    adj = np.zeros((n, n), dtype=bool)
    adj[: G.n_left, : G.n_right] = G.adjacency
    return FractionalMatching(np.where(adj, n * X, 0.0))


def _canceling_step(Z, adj_frac, n):
    """Find one fractional cycle or maximal path and shift mass along it.

    Vertices ``0..n-1`` are left, ``n..2n-1`` right; ``adj_frac`` lists the
    fractional edges at each vertex. Returns False when none remain.
    """
    start = next((v for v in range(2 * n) if len(adj_frac[v]) == 1), None)
    if start is None:
        start = next((v for v in range(2 * n) if adj_frac[v]), None)
    if start is None:
        return False

    walk = [start]
    pos = {start: 0}
    prev = None
    while True:
        cur = walk[-1]
        nxt = next((w for w in adj_frac[cur] if w != prev), None)
        if nxt is None:
            break
        if nxt in pos:
            walk = walk[pos[nxt]:] + [nxt]
            break
        pos[nxt] = len(walk)
        walk.append(nxt)
        prev = cur

    edges = [(a, b - n) if a < n else (b, a - n) for a, b in zip(walk[:-1], walk[1:])]
    # Cycles are even, so alternating signs keep every load and the value.
    # Maximal paths start at a vertex whose only positive edge is fractional,
    # so raising the first edge is limited by its own 1 - z; an odd path
    # gains value, an even one keeps it.
    plus, minus = edges[0::2], edges[1::2]
    theta = min([Z[e] for e in minus] + [1.0 - Z[e] for e in plus])
    for e in plus:
        Z[e] += theta
    for e in minus:
        Z[e] -= theta
    for i, j in edges:
        z = Z[i, j]
        if z <= SNAP or z >= 1.0 - SNAP:
            Z[i, j] = 0.0 if z <= SNAP else 1.0
            adj_frac[i].discard(n + j)
            adj_frac[n + j].discard(i)
    return True


def round_fractional_matching(Z: FractionalMatching, G: Optional[BipartiteGraph] = None) -> Matching:
    """Integral matching with at least ``ceil(value(Z))`` edges.

    Mass is shifted around fractional cycles and along maximal fractional
    paths, never lowering the total, until every weight is 0 or 1.
    """
    W = np.array(Z.weights, dtype=float)
    n = max(W.shape)
    if W.shape[0] != W.shape[1]:
        sq = np.zeros((n, n))
        sq[: W.shape[0], : W.shape[1]] = W
        W = sq
    if np.any(W.sum(axis=1) > 1 + 1e-9) or np.any(W.sum(axis=0) > 1 + 1e-9):
        raise ValidationError("fractional matching has a vertex load above 1")
    W[W <= SNAP] = 0.0
    W[W >= 1.0 - SNAP] = 1.0
    # a vertex holding a unit edge keeps only that edge (the rest is round-off)
    full = W == 1.0
    rows, cols = full.any(axis=1), full.any(axis=0)
    W[rows] = np.where(full[rows], 1.0, 0.0)
    W[:, cols] = np.where(full[:, cols], 1.0, 0.0)
    adj_frac = [set() for _ in range(2 * n)]
    for i, j in zip(*np.nonzero((W > 0) & (W < 1))):
        adj_frac[i].add(n + j)
        adj_frac[n + j].add(i)
    while _canceling_step(W, adj_frac, n):
        pass
    edges = [(int(i), int(j)) for i, j in zip(*np.nonzero(W >= 0.5))]
    if G is not None:
        edges = [(i, j) for i, j in edges if i < G.n_left and j < G.n_right and G.adjacency[i, j]]
    return Matching(edges)


def augment_to_maximum(M: Matching, G: BipartiteGraph) -> tuple[Matching, int]:
    """Grow ``M`` by BFS augmenting paths until none exists.

    Returns the maximum matching and the number of augmentations performed.
    """
    if not M.is_valid(G):
        raise ValidationError("starting matching is not a matching of G")
    nbrs = G.neighbors()
    match_l = [-1] * G.n_left
    match_r = [-1] * G.n_right
    for i, j in M.edges:
        match_l[i], match_r[j] = j, i
    augmentations = 0
    progress = True
    while progress:
        progress = False
        for root in range(G.n_left):
            if match_l[root] >= 0:
                continue
            parent = {}  # right vertex -> left vertex it was reached from
            queue = deque([root])
            seen_left = {root}
            end = -1
            while queue and end < 0:
                u = queue.popleft()
                for w in nbrs[u]:
                    if w in parent:
                        continue
                    parent[w] = u
                    if match_r[w] < 0:
                        end = w
                        break
                    nxt = match_r[w]
                    if nxt not in seen_left:
                        seen_left.add(nxt)
                        queue.append(nxt)
            if end < 0:
                continue
            w = end
            while w >= 0:
                u = parent[w]
                prev_w = match_l[u]
                match_l[u], match_r[w] = w, u
                w = prev_w
            augmentations += 1
            progress = True
    return Matching((u, w) for u, w in enumerate(match_l) if w >= 0), augmentations


def max_matching_via_ot(
    G: BipartiteGraph, eps: float, method: str = "scaling", **solver_kwargs
) -> tuple[Matching, SolveReport]:
    """Maximum matching through an ``eps``-approximate transport solve.

    The report's ``augmentations`` field counts how many augmenting paths
    the finisher needed on top of the rounded transport solution.
    """
    if not (0.0 < eps < 1.0):
        raise InvalidEpsilon(f"matching tolerance must lie in (0, 1), got {eps!r}")
    solvers = {"packing": solve_ot_via_packing, "scaling": solve_ot_via_scaling}
    if method not in solvers:
        raise ValidationError(f"unknown method {method!r}; choose packing or scaling")
    start = time.perf_counter()
    if min(G.n_left, G.n_right) == 0:
        empty = SolveReport(method, eps, 0.0, 0.0, 0, 0, augmentations=0)
        return Matching(()), empty
    inst = matching_to_ot(G)
    X, report = solvers[method](inst, eps, **solver_kwargs)
    Z = extract_fractional_matching(X, G)
    rounded = round_fractional_matching(Z, G)
    M, augmentations = augment_to_maximum(rounded, G)
    n = inst.shape[0]
    report.augmentations = augmentations
    report.details.update(
        fractional_value=Z.value,
        rounded_size=rounded.size,
        matching_size=M.size,
        augmentation_budget=n * eps + 1,
    )
    report.wall_time_ms = int(round(1000 * (time.perf_counter() - start)))
    if augmentations > n * eps + 1:
        logger.info("needed %d augmentations, above n*eps + 1 = %.2f", augmentations, n * eps + 1)
    return M, report
