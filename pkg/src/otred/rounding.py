"""Feasibility repair for approximate transport plans.

Three constructions live here:

* :func:`complete_subfeasible` adds a rank-one correction to a plan whose
  marginals undershoot ``(r, c)``.
* :func:`round_to_polytope` projects an arbitrary nonnegative matrix onto the
  transportation polytope (scale rows down, scale columns down, complete).
* :func:`truncate_marginals` / :func:`extend_coupling` drop tiny marginal
  entries and later put the dropped mass back as a product coupling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Histogram, as_matrix, as_vector, marginal_residuals
from .errors import EmptySupport, InvalidEpsilon, MarginalMismatch, NotSubfeasible, ZeroMass

SUBFEASIBLE_TOL = 1e-10


def complete_subfeasible(X, r, c, tol: float = SUBFEASIBLE_TOL) -> np.ndarray:
    """Return ``Y = X + D`` with marginals exactly ``r`` and ``c``.

    ``X`` must satisfy ``X1 <= r`` and ``X^T 1 <= c`` up to ``tol``; tiny
    overshoots are clamped to zero deficit. ``D = e_r e_c^T / |e_c|_1`` is
    rank one and nonnegative, so ``Y >= X`` entrywise.
    """
    X, r, c = as_matrix(X), as_vector(r), as_vector(c)
    res = marginal_residuals(X, r, c)
    er, ec = res.row_residual, res.col_residual
    if er.min(initial=0.0) < -tol or ec.min(initial=0.0) < -tol:
        raise NotSubfeasible(
            f"plan exceeds marginals by {max(-er.min(), -ec.min()):.3g} (tolerance {tol:g})"
        )
    er = np.maximum(er, 0.0)
    ec = np.maximum(ec, 0.0)
    mass = ec.sum()
    if mass <= 0.0:
        return X.copy()
    return X + np.outer(er, ec) / mass


def round_to_polytope(B, r, c, C=None) -> np.ndarray:
    """Round a nonnegative matrix onto the polytope of couplings of ``r`` and ``c``.

    Rows are scaled by ``min(1, r_i / (B1)_i)``, then columns by
    ``min(1, c_j / (B^T 1)_j)``; the resulting subfeasible plan is completed
    with :func:`complete_subfeasible`. The cost can grow by at most
    ``2 max(C) (|B1 - r|_1 + |B^T 1 - c|_1)``.

    ``C`` is accepted for interface symmetry and is not used by the
    construction.
    """
    B, r, c = as_matrix(B), as_vector(r), as_vector(c)
    if np.any(B < 0):
        raise ValueError("round_to_polytope expects a nonnegative matrix")
    if not np.any(B > 0):
        raise ZeroMass("cannot round the zero matrix")
    rows = B.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        fr = np.where(rows > r, r / rows, 1.0)
    F = B * fr[:, None]
    cols = F.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        fc = np.where(cols > c, c / cols, 1.0)
    F = F * fc[None, :]
    # scaling leaves round-off overshoots of a few ulps; the completion clamps them
    return complete_subfeasible(F, r, c, tol=1e-9)


@dataclass(frozen=True)
class TruncationMap:
    """Result of dropping marginal entries below ``threshold``.

    ``truncated_row`` / ``truncated_col`` are the conditional distributions of
    ``r`` and ``c`` on the retained supports, and ``mass_factor`` is the mass
    ``r(S_r) * c(S_c)`` of the retained block under the product coupling.
    """

    row_support: np.ndarray
    col_support: np.ndarray
    mass_factor: float
    truncated_row: Histogram
    truncated_col: Histogram
    threshold: float

    @property
    def is_identity(self) -> bool:
        return self.mass_factor == 1.0 and bool(
            np.all(np.diff(self.row_support) == 1) and np.all(np.diff(self.col_support) == 1)
        )


def _conditional(v: np.ndarray, support: np.ndarray) -> tuple[Histogram, float]:
    kept = v[support]
    mass = float(kept.sum())
    cond = kept / mass
    # renormalise once more so the result passes the 1e-12 histogram check
    cond = cond / cond.sum()
    return Histogram(cond), mass


def truncate_marginals(r, c, eps: float, c_max: float) -> TruncationMap:
    """Keep entries ``>= eps / (2 c_max n)`` with ``n = max(len(r), len(c))``.

    >>> tm = truncate_marginals([0.99, 0.01], [0.5, 0.5], 0.1, 1.0)
    >>> tm.row_support.tolist(), tm.mass_factor
    ([0], 0.99)
    """
    r, c = as_vector(r), as_vector(c)
    if not eps > 0:
        raise InvalidEpsilon(f"epsilon must be positive, got {eps!r}")
    if not c_max > 0:
        raise ValueError("c_max must be positive")
    n = max(r.size, c.size)
    threshold = eps / (2.0 * c_max * n)
    sr = np.flatnonzero(r >= threshold)
    sc = np.flatnonzero(c >= threshold)
    if sr.size == 0 or sc.size == 0:
        raise EmptySupport(f"no marginal entry reaches threshold {threshold:.3g}")
    rt, mr = (Histogram(r), 1.0) if sr.size == r.size else _conditional(r, sr)
    ct, mc = (Histogram(c), 1.0) if sc.size == c.size else _conditional(c, sc)
    return TruncationMap(sr, sc, mr * mc, rt, ct, threshold)


def extend_coupling(X_trunc, tmap: TruncationMap, r, c, tol: float = 1e-9) -> np.ndarray:
    """Lift a plan on ``S_r x S_c`` back to the full marginals.

    Inside the retained block the plan is scaled by ``mass_factor``; every
    other entry is ``r_i c_j``.
    """
    Xt, r, c = as_matrix(X_trunc), as_vector(r), as_vector(c)
    if Xt.shape != (tmap.row_support.size, tmap.col_support.size):
        raise MarginalMismatch(
            f"plan shape {Xt.shape} does not match truncated supports "
            f"({tmap.row_support.size}, {tmap.col_support.size})"
        )
    res = marginal_residuals(Xt, tmap.truncated_row, tmap.truncated_col)
    if res.l1_total > tol:
        raise MarginalMismatch(f"plan violates truncated marginals by {res.l1_total:.3g}")
    out = np.outer(r, c)
    out[np.ix_(tmap.row_support, tmap.col_support)] = tmap.mass_factor * Xt
    return out
