"""Exact solvers for small instances.

These are reference answers for tests and for ``ot certify``; nothing on a
solve path calls into this module.
"""

from __future__ import annotations

import itertools
import math
import os
from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import TransportInstance, as_matrix, as_vector
from .errors import TooLarge
from .graphs import BipartiteGraph, Matching

DEFAULT_MAX_VARS = 10_000
PIVOT_TOL = 1e-11
DEGENERATE_RUN = 50


def max_oracle_vars() -> int:
    """Variable cap for exact solves; ``OT_MAX_ORACLE_VARS`` overrides it."""
    raw = os.environ.get("OT_MAX_ORACLE_VARS")
    if raw:
        try:
            return int(raw)
        except ValueError:
            pass
    return DEFAULT_MAX_VARS


@dataclass(frozen=True)
class ExactSolution:
    optimum: float
    method: str
    argmin_plan: Optional[np.ndarray] = None
    matching: Optional[Matching] = None


def _northwest_corner(r: np.ndarray, c: np.ndarray):
    n, m = r.size, c.size
    supply, demand = r.astype(float).copy(), c.astype(float).copy()
    basis, flow = [], []
    i = j = 0
    while True:
        q = max(0.0, min(supply[i], demand[j]))
        basis.append((i, j))
        flow.append(q)
        supply[i] -= q
        demand[j] -= q
        if i == n - 1 and j == m - 1:
            break
        if j == m - 1 or (i < n - 1 and supply[i] <= demand[j]):
            i += 1
        else:
            j += 1
    return basis, flow


def _tree_potentials(C, n, m, adj):
    u = np.full(n, np.nan)
    v = np.full(m, np.nan)
    u[0] = 0.0
    queue = deque([0])
    while queue:
        node = queue.popleft()
        if node < n:
            for col in adj[node]:
                if math.isnan(v[col - n]):
                    v[col - n] = C[node, col - n] - u[node]
                    queue.append(col)
        else:
            for row in adj[node]:
                if math.isnan(u[row]):
                    u[row] = C[row, node - n] - v[node - n]
                    queue.append(row)
    return u, v


def _tree_path(adj, start, goal):
    parent = {start: None}
    queue = deque([start])
    while queue:
        node = queue.popleft()
        if node == goal:
            break
        for nxt in adj[node]:
            if nxt not in parent:
                parent[nxt] = node
                queue.append(nxt)
    path = [goal]
    while path[-1] != start:
        path.append(parent[path[-1]])
    return path  # goal ... start


def network_simplex(C, r, c, max_pivots: Optional[int] = None, rule: str = "dantzig"):
    """Transportation simplex on a spanning-tree basis.

    ``rule="bland"`` picks the lowest-index improving cell and the
    lowest-index leaving cell throughout. ``rule="dantzig"`` prices by most
    negative reduced cost but drops to Bland's rule after a run of
    ``DEGENERATE_RUN`` degenerate pivots, which keeps the anti-cycling
    guarantee. Returns ``(plan, optimum, pivots)``.
    """
    C, r, c = as_matrix(C), as_vector(r), as_vector(c)
    n, m = C.shape
    basis, flow = _northwest_corner(r, c)
    flows = {cell: f for cell, f in zip(basis, flow)}
    adj = [set() for _ in range(n + m)]
    for i, j in basis:
        adj[i].add(n + j)
        adj[n + j].add(i)
    if max_pivots is None:
        max_pivots = 50 * (n * m + n + m) + 1000
    pivots = 0
    degenerate_run = 0
    while True:
        u, v = _tree_potentials(C, n, m, adj)
        reduced = (C - u[:, None] - v[None, :]).ravel()
        if rule == "bland" or degenerate_run >= DEGENERATE_RUN:
            neg = np.flatnonzero(reduced < -PIVOT_TOL)
            if neg.size == 0:
                break
            enter = int(neg[0])
        else:
            enter = int(np.argmin(reduced))
            if reduced[enter] >= -PIVOT_TOL:
                break
        if pivots >= max_pivots:
            raise RuntimeError("network simplex exceeded its pivot budget")
        ei, ej = divmod(enter, m)
        # cycle: entering (ei, ej) then tree path from column ej back to row ei
        path = _tree_path(adj, ei, n + ej)  # [n+ej, ..., ei]
        cells = []
        for a, b in zip(path[:-1], path[1:]):
            cells.append((b, a - n) if a >= n else (a, b - n))
        minus = cells[0::2]
        plus = cells[1::2]
        theta = min(flows[cell] for cell in minus)
        degenerate_run = degenerate_run + 1 if theta <= 0.0 else 0
        ties = [cell for cell in minus if flows[cell] - theta <= 1e-15]
        leave = min(ties, key=lambda ij: ij[0] * m + ij[1])
        for cell in minus:
            flows[cell] = max(0.0, flows[cell] - theta)
        for cell in plus:
            flows[cell] += theta
        del flows[leave]
        li, lj = leave
        adj[li].discard(n + lj)
        adj[n + lj].discard(li)
        flows[(ei, ej)] = theta
        adj[ei].add(n + ej)
        adj[n + ej].add(ei)
        pivots += 1
    plan = np.zeros((n, m))
    for (i, j), f in flows.items():
        plan[i, j] = f
    optimum = math.fsum(C[i, j] * f for (i, j), f in flows.items())
    return plan, optimum, pivots


def exact_ot(inst: TransportInstance, max_vars: Optional[int] = None) -> ExactSolution:
    """Exact optimal transport cost by network simplex."""
    n, m = inst.shape
    cap = max_oracle_vars() if max_vars is None else max_vars
    if n * m > cap:
        raise TooLarge(f"{n}x{m} instance exceeds the oracle cap of {cap} variables")
    plan, opt, _ = network_simplex(inst.C, inst.r, inst.c)
    return ExactSolution(opt, "network_simplex", argmin_plan=plan)


def _equality_system(n: int, m: int) -> np.ndarray:
    # one row-sum equation is redundant; drop the last row equation
    A = np.zeros((n + m, n * m))
    for i in range(n):
        A[i, i * m:(i + 1) * m] = 1.0
    for j in range(m):
        A[n + j, j::m] = 1.0
    return np.delete(A, n - 1, axis=0)


def vertex_enumeration(C, r, c, batch: int = 4096) -> ExactSolution:
    """Brute-force optimum over all basic feasible solutions.

    Every square column subset of the reduced equality system is tried; the
    system is totally unimodular so singular subsets show up as determinant 0.
    Only practical for ``n * m`` up to about 16.
    """
    C, r, c = as_matrix(C), as_vector(r), as_vector(c)
    n, m = C.shape
    A = _equality_system(n, m)
    rhs = np.concatenate([np.delete(r, n - 1), c])
    k = n + m - 1
    best, best_plan = math.inf, None
    combos = itertools.combinations(range(n * m), k)
    while True:
        chunk = list(itertools.islice(combos, batch))
        if not chunk:
            break
        idx = np.array(chunk)
        mats = A[:, idx].transpose(1, 0, 2)  # (batch, k, k)
        dets = np.linalg.det(mats)
        ok = np.abs(dets) > 0.5
        if not np.any(ok):
            continue
        sols = np.linalg.solve(mats[ok], np.broadcast_to(rhs, (int(ok.sum()), k))[..., None])[..., 0]
        feas = np.all(sols >= -1e-12, axis=1)
        for cols, x in zip(idx[ok][feas], sols[feas]):
            val = math.fsum(C.ravel()[cols] * x)
            if val < best:
                best = val
                best_plan = np.zeros(n * m)
                best_plan[cols] = np.maximum(x, 0.0)
    plan = None if best_plan is None else best_plan.reshape(n, m)
    return ExactSolution(best, "vertex_enumeration", argmin_plan=plan)


def exact_packing_value(P, max_vars: Optional[int] = None) -> ExactSolution:
    """Exact optimum of ``max d.x s.t. Ax <= b, x >= 0``.

    Transport-structured instances with balanced capacities are solved as an
    optimal transport problem through the identity
    ``V* = kappa * mass - OPT(kappa - d)`` with ``kappa = max d``; anything else
    goes to HiGHS via :func:`scipy.optimize.linprog`.
    """
    cap = max_oracle_vars() if max_vars is None else max_vars
    if P.n_vars > cap:
        raise TooLarge(f"packing LP with {P.n_vars} variables exceeds the oracle cap of {cap}")
    b, d = P.capacities, P.objective
    if not np.any(d > 0) or not np.any(b > 0):
        return ExactSolution(0.0, "trivial", argmin_plan=np.zeros(P.n_vars))
    if P.ot_shape is not None:
        n, m = P.ot_shape
        r, c = b[:n], b[n:]
        sr, sc = math.fsum(r), math.fsum(c)
        if sr > 0 and abs(sr - sc) <= 1e-12 * max(1.0, sr):
            kappa = float(d.max())
            D = d.reshape(n, m)
            plan, opt, _ = network_simplex(kappa - D, r / sr, c / sr)
            value = sr * (kappa - opt)
            return ExactSolution(value, "network_simplex", argmin_plan=(sr * plan).ravel())
    return linprog_packing_value(P)


def linprog_packing_value(P) -> ExactSolution:
    from scipy.optimize import linprog

    A = P.dense_matrix()
    res = linprog(-P.objective, A_ub=A, b_ub=P.capacities, bounds=(0, None), method="highs")
    if res.status != 0:
        raise RuntimeError(f"linprog failed: {res.message}")
    return ExactSolution(float(-res.fun), "linprog", argmin_plan=res.x)


def hopcroft_karp(G: BipartiteGraph) -> ExactSolution:
    """Maximum-cardinality matching via Hopcroft-Karp phases."""
    nl, nr = G.n_left, G.n_right
    nbrs = G.neighbors()
    match_l = [-1] * nl
    match_r = [-1] * nr
    INF = math.inf

    def bfs(dist):
        queue = deque()
        for u in range(nl):
            if match_l[u] < 0:
                dist[u] = 0
                queue.append(u)
            else:
                dist[u] = INF
        found = False
        while queue:
            u = queue.popleft()
            for w in nbrs[u]:
                p = match_r[w]
                if p < 0:
                    found = True
                elif dist[p] == INF:
                    dist[p] = dist[u] + 1
                    queue.append(p)
        return found

    def dfs(u, dist):
        # iterative DFS along layered edges; returns True if an augmenting path was applied
        stack = [(u, iter(nbrs[u]))]
        trail = []
        while stack:
            node, it = stack[-1]
            advanced = False
            for w in it:
                p = match_r[w]
                if p < 0:
                    trail.append((node, w))
                    for a, b in trail:
                        match_l[a] = b
                        match_r[b] = a
                    return True
                if dist[p] == dist[node] + 1:
                    trail.append((node, w))
                    stack.append((p, iter(nbrs[p])))
                    advanced = True
                    break
            if not advanced:
                dist[node] = INF
                stack.pop()
                if trail:
                    trail.pop()
        return False

    dist = [INF] * nl
    size = 0
    while bfs(dist):
        for u in range(nl):
            if match_l[u] < 0 and dfs(u, dist):
                size += 1
    matching = Matching((u, w) for u, w in enumerate(match_l) if w >= 0)
    return ExactSolution(float(size), "hopcroft_karp", matching=matching)
