"""Optimal transport through a packing linear program.

The transport problem ``min <C, X>`` over couplings of ``(r, c)`` is rewritten
as ``max <B, X>`` with ``B = max(C) - C`` subject only to upper bounds
``X1 <= r`` and ``X^T 1 <= c``. A ``(1 - eps')``-approximate packing solution
with ``eps' = eps / max(C)`` becomes an additive ``eps``-optimal coupling after
the rank-one completion in :func:`otred.rounding.complete_subfeasible`.

Any callable with the signature of :func:`solve_packing` can be passed to
:func:`solve_ot_via_packing` as the packing oracle. The bundled one is a
deterministic width-independent multiplicative-weights method.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import (
    SolveReport,
    TransportInstance,
    clamp_epsilon,
    marginal_residuals,
    product_coupling,
    require_instance,
    transport_cost,
)
from .errors import (
    DimensionMismatch,
    InvalidEpsilon,
    NegativeEntry,
    NotConverged,
    ValidationError,
    ZeroCostMatrix,
    ZeroMarginal,
)
from .rounding import complete_subfeasible

logger = logging.getLogger(__name__)

FEASIBILITY_TOL = 1e-9


class PackingLP:
    """``max d.x  s.t.  A x <= b, x >= 0`` with nonnegative data.

    Pass either an explicit ``matrix`` (dense array or scipy sparse matrix) or
    ``ot_shape=(n, m)``. In the latter case ``A`` is the row/column incidence
    matrix of an ``n x m`` plan: variable ``(i, j)`` (row-major index
    ``i * m + j``) has coefficient 1 in constraint ``i`` and in constraint
    ``n + j``. That matrix is never materialised; products are row and column
    sums.
    """

    def __init__(self, capacities, objective, matrix=None, ot_shape=None):
        b = np.array(capacities, dtype=float).ravel()
        d = np.array(objective, dtype=float).ravel()
        if (matrix is None) == (ot_shape is None):
            raise ValidationError("give exactly one of matrix= or ot_shape=")
        if ot_shape is not None:
            n, m = (int(k) for k in ot_shape)
            if b.size != n + m or d.size != n * m:
                raise DimensionMismatch(
                    f"transport packing LP {n}x{m} needs {n + m} capacities and {n * m} objective entries"
                )
            self.ot_shape = (n, m)
            self.matrix = None
        else:
            self.ot_shape = None
            if hasattr(matrix, "tocsr"):
                self.matrix = matrix.tocsr().astype(float)
                if self.matrix.nnz and self.matrix.data.min() < 0:
                    raise NegativeEntry("constraint matrix has negative entries")
            else:
                self.matrix = np.array(matrix, dtype=float)
                if np.any(self.matrix < 0):
                    raise NegativeEntry("constraint matrix has negative entries")
            if self.matrix.shape != (b.size, d.size):
                raise DimensionMismatch(
                    f"matrix shape {self.matrix.shape} vs ({b.size}, {d.size}) from b and d"
                )
        for arr, what in ((b, "capacities"), (d, "objective")):
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"{what} must be finite")
            if np.any(arr < 0):
                raise NegativeEntry(f"{what} have negative entries")
        b.setflags(write=False)
        d.setflags(write=False)
        self.capacities = b
        self.objective = d

    @property
    def n_constraints(self) -> int:
        return self.capacities.size

    @property
    def n_vars(self) -> int:
        return self.objective.size

    def matvec(self, x: np.ndarray) -> np.ndarray:
        if self.ot_shape is not None:
            X = x.reshape(self.ot_shape)
            return np.concatenate([X.sum(axis=1), X.sum(axis=0)])
        return np.asarray(self.matrix @ x).ravel()

    def rmatvec(self, y: np.ndarray) -> np.ndarray:
        if self.ot_shape is not None:
            n, _ = self.ot_shape
            return (y[:n, None] + y[None, n:]).ravel()
        return np.asarray(self.matrix.T @ y).ravel()

    def dense_matrix(self) -> np.ndarray:
        if self.ot_shape is None:
            return self.matrix.toarray() if hasattr(self.matrix, "toarray") else self.matrix.copy()
        n, m = self.ot_shape
        A = np.zeros((n + m, n * m))
        for i in range(n):
            A[i, i * m:(i + 1) * m] = 1.0
        for j in range(m):
            A[n + j, j::m] = 1.0
        return A

    def dual_bound(self, y: np.ndarray, objective: Optional[np.ndarray] = None) -> float:
        """Upper bound on the optimum from a nonnegative dual direction ``y``.

        ``y / alpha`` is dual feasible for ``alpha = min_j (A^T y)_j / d_j``,
        so ``V* <= b.y / alpha``. Transport-structured instances additionally
        try the best column duals for the scaled row duals and vice versa.
        """
        d = self.objective if objective is None else objective
        pos = d > 0
        if not np.any(pos):
            return 0.0
        aty = self.rmatvec(y)
        alpha = float(np.min(aty[pos] / d[pos]))
        if alpha <= 0:
            return math.inf
        z = y / alpha
        best = float(self.capacities @ z)
        if self.ot_shape is not None:
            n, m = self.ot_shape
            D = d.reshape(n, m)
            r, c = self.capacities[:n], self.capacities[n:]
            u = z[:n]
            v = np.maximum(0.0, (D - u[:, None]).max(axis=0))
            best = min(best, float(r @ u + c @ v))
            v = z[n:]
            u = np.maximum(0.0, (D - v[None, :]).max(axis=1))
            best = min(best, float(r @ u + c @ v))
        return best


@dataclass(frozen=True)
class PackingSolution:
    x: np.ndarray
    value: float
    iterations: int
    epsilon_used: float
    dual_bound: float = math.inf

    @property
    def certified(self) -> bool:
        return self.value >= (1.0 - self.epsilon_used) * self.dual_bound


PackingOracle = Callable[..., PackingSolution]


def build_packing_instance(inst: TransportInstance) -> PackingLP:
    """Packing LP whose objective is ``B = max(C) 11^T - C``.

    >>> from otred.core import validate_instance
    >>> P = build_packing_instance(validate_instance([[0, 2], [1, 0]], [.5, .5], [.5, .5]))
    >>> P.objective.reshape(2, 2).tolist()
    [[2.0, 0.0], [1.0, 2.0]]
    """
    inst = require_instance(inst)
    c_max = inst.cost.max_entry
    if c_max <= 0:
        raise ZeroCostMatrix("cost matrix is identically zero; every coupling is optimal")
    B = c_max - inst.C
    return PackingLP(np.concatenate([inst.r, inst.c]), B.ravel(), ot_shape=inst.shape)


def default_packing_budget(P: PackingLP, eps_prime: float) -> int:
    return int(math.ceil(P.n_vars * math.log(P.n_constraints + 1) / eps_prime**2)) + 100


def solve_packing(
    P: PackingLP,
    eps_prime: float,
    max_iters: Optional[int] = None,
    check_every: int = 10,
) -> PackingSolution:
    """Width-independent multiplicative-weights packing solver.

    Each constraint carries a weight that grows multiplicatively with its
    normalised load ``(Ax)_i / b_i``. Every step raises all variables whose
    weighted cost per unit of objective is within ``1 + eps'`` of the
    cheapest, scaled so no constraint's load grows by more than one unit.
    Every ``check_every`` steps the iterate is scaled back to feasibility and
    compared with the best dual bound seen so far; the run stops once
    ``d.x >= (1 - eps') * bound``, which certifies the ``(1 - eps')`` guarantee.

    Ties in the cost threshold are inclusive, so equally attractive
    variables move together and no index order enters the result.
    """
    if not (0.0 < eps_prime < 1.0):
        raise InvalidEpsilon(f"packing tolerance must lie in (0, 1), got {eps_prime!r}")
    b, d = P.capacities, P.objective
    if max_iters is None:
        max_iters = default_packing_budget(P, eps_prime)

    # variables touching a zero-capacity constraint are pinned at zero
    live_rows = b > 0
    blocked = P.rmatvec((~live_rows).astype(float)) > 0
    active = (d > 0) & ~blocked
    if not np.any(active):
        return PackingSolution(np.zeros(P.n_vars), 0.0, 0, eps_prime, 0.0)
    unconstrained = P.rmatvec(live_rows.astype(float)) <= 0
    if np.any(active & unconstrained):
        raise ValidationError("packing LP is unbounded: a profitable variable has no constraint")

    d_eff = np.where(active, d, 0.0)
    inv_d = np.where(active, 1.0 / np.where(active, d, 1.0), 0.0)
    bsafe = np.where(live_rows, b, 1.0)
    x = np.zeros(P.n_vars)
    logw = np.zeros(P.n_constraints)
    best_dual = math.inf
    best_x, best_value = np.zeros(P.n_vars), 0.0

    for it in range(max_iters + 1):
        w = np.where(live_rows, np.exp(logw - logw[live_rows].max()), 0.0)
        y = w / bsafe
        price = P.rmatvec(y)
        ratio = np.where(active, price * inv_d, np.inf)
        alpha = float(ratio.min())

        if it % check_every == 0:
            best_dual = min(best_dual, P.dual_bound(y, d_eff))
            loads = P.matvec(x) / bsafe
            peak = float(loads[live_rows].max())
            if peak > 0:
                xf = x / peak
                value = math.fsum(d_eff * xf)
                if value > best_value:
                    best_x, best_value = xf, value
            if best_value >= (1.0 - eps_prime) * best_dual:
                logger.debug("packing certified after %d steps: %.6g / %.6g", it, best_value, best_dual)
                return PackingSolution(best_x, best_value, it, eps_prime, best_dual)
        if it == max_iters:
            break

        step = np.where(ratio <= (1.0 + eps_prime) * alpha, inv_d, 0.0)
        growth = P.matvec(step) / bsafe
        t = 1.0 / float(growth[live_rows].max())
        x += t * step
        logw += np.log1p(eps_prime * t * growth)

    raise NotConverged(
        f"packing solver did not certify within {max_iters} steps "
        f"(value {best_value:.6g}, dual bound {best_dual:.6g})",
        report={"iterations": max_iters, "value": best_value, "dual_bound": best_dual},
    )


def solve_ot_via_packing(
    inst: TransportInstance,
    eps: float,
    oracle: Optional[PackingOracle] = None,
    max_iters: Optional[int] = None,
) -> tuple[np.ndarray, SolveReport]:
    """Additive ``eps``-optimal coupling through the packing reduction.

    Returns the plan and a :class:`SolveReport`. Instances with a zero
    marginal entry are rejected; use the scaling route for those.
    """
    inst = require_instance(inst)
    start = time.perf_counter()
    c_max = inst.cost.max_entry
    eps = clamp_epsilon(eps, c_max)
    if inst.has_zero_marginal:
        raise ZeroMarginal("the packing route needs strictly positive marginals")
    oracle = solve_packing if oracle is None else oracle
    details: dict = {}
    iterations = 0
    if c_max <= 0:
        Y = product_coupling(inst.r, inst.c)
        details["short_circuit"] = "zero cost"
    else:
        eps_prime = eps / c_max
        n, m = inst.shape
        if eps_prime >= 1.0:
            # any plan is within max(C) of optimal; x = 0 is a valid answer
            X = np.zeros((n, m))
            details["short_circuit"] = "eps >= max cost"
        else:
            P = build_packing_instance(inst)
            kwargs = {} if max_iters is None else {"max_iters": max_iters}
            sol = oracle(P, eps_prime, **kwargs)
            X = sol.x.reshape(n, m)
            iterations = sol.iterations
            details.update(packing_value=sol.value, dual_bound=sol.dual_bound, eps_prime=eps_prime)
        Y = complete_subfeasible(X, inst.r, inst.c)
    res = marginal_residuals(Y, inst.r, inst.c)
    report = SolveReport(
        method="packing",
        epsilon=eps,
        cost=transport_cost(inst.C, Y),
        residual_l1=res.l1_total,
        iterations=iterations,
        wall_time_ms=int(round(1000 * (time.perf_counter() - start))),
        details=details,
    )
    return Y, report
