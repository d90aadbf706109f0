"""Instance and coupling types plus the scalar functionals built on them.

Every matrix is dense and row-major. Scalars that end up in reports (cost,
residuals) are accumulated with :func:`math.fsum`, so they do not depend on
how numpy happens to block a reduction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .errors import (
    DimensionMismatch,
    NegativeEntry,
    NonFiniteEntry,
    NotNormalized,
    ValidationError,
)

#: Allowed deviation of an input histogram's sum from 1.
INPUT_TOL = 1e-12
#: Allowed marginal residual on solver outputs.
OUTPUT_TOL = 1e-8


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


def _check_finite_nonneg(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteEntry(f"{what} has non-finite entries")
    if np.any(arr < 0):
        raise NegativeEntry(f"{what} has negative entries (min {arr.min():.3g})")


@dataclass(frozen=True)
class Histogram:
    """Probability vector. Construction checks nonnegativity and unit mass."""

    values: np.ndarray

    def __post_init__(self):
        arr = _frozen(self.values)
        if arr.ndim != 1 or arr.size == 0:
            raise DimensionMismatch(f"histogram must be a nonempty vector, got shape {arr.shape}")
        _check_finite_nonneg(arr, "histogram")
        total = math.fsum(arr)
        if abs(total - 1.0) > INPUT_TOL:
            raise NotNormalized(f"histogram sums to {total!r}, expected 1")
        object.__setattr__(self, "values", arr)

    @property
    def support_size(self) -> int:
        return int(self.values.size)

    def __len__(self):
        return self.support_size


@dataclass(frozen=True)
class CostMatrix:
    entries: np.ndarray
    max_entry: float = field(init=False)

    def __post_init__(self):
        arr = _frozen(self.entries)
        if arr.ndim != 2 or arr.size == 0:
            raise DimensionMismatch(f"cost must be a nonempty matrix, got shape {arr.shape}")
        _check_finite_nonneg(arr, "cost matrix")
        object.__setattr__(self, "entries", arr)
        object.__setattr__(self, "max_entry", float(arr.max()))

    @property
    def shape(self):
        return self.entries.shape


@dataclass(frozen=True)
class TransportInstance:
    """Cost matrix with its row and column marginals.

    ``has_zero_marginal`` is set when either marginal has a zero entry. Such
    instances are only accepted by solvers that truncate marginals first.
    """

    cost: CostMatrix
    row_marginal: Histogram
    col_marginal: Histogram
    has_zero_marginal: bool = field(init=False)

    def __post_init__(self):
        n, m = self.cost.shape
        if self.row_marginal.support_size != n or self.col_marginal.support_size != m:
            raise DimensionMismatch(
                f"cost is {n}x{m} but marginals have lengths "
                f"{self.row_marginal.support_size} and {self.col_marginal.support_size}"
            )
        zero = bool(np.any(self.row_marginal.values == 0) or np.any(self.col_marginal.values == 0))
        object.__setattr__(self, "has_zero_marginal", zero)

    @property
    def shape(self):
        return self.cost.shape

    @property
    def C(self) -> np.ndarray:
        return self.cost.entries

    @property
    def r(self) -> np.ndarray:
        return self.row_marginal.values

    @property
    def c(self) -> np.ndarray:
        return self.col_marginal.values


@dataclass(frozen=True)
class Coupling:
    plan: np.ndarray
    total_mass: float = field(init=False)

    def __post_init__(self):
        arr = _frozen(self.plan)
        if arr.ndim != 2:
            raise DimensionMismatch(f"coupling must be a matrix, got shape {arr.shape}")
        _check_finite_nonneg(arr, "coupling")
        object.__setattr__(self, "plan", arr)
        object.__setattr__(self, "total_mass", math.fsum(arr.ravel()))

    @property
    def shape(self):
        return self.plan.shape


@dataclass(frozen=True)
class MarginalResiduals:
    row_residual: np.ndarray
    col_residual: np.ndarray
    l1_total: float


@dataclass
class SolveReport:
    """Summary of one solver run, serialised by the CLI as JSON."""

    method: str
    epsilon: float
    cost: float
    residual_l1: float
    iterations: int
    wall_time_ms: int
    certified_gap: Optional[float] = None
    augmentations: Optional[int] = None
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "schema": 1,
            "method": self.method,
            "epsilon": self.epsilon,
            "cost": self.cost,
            "residual_l1": self.residual_l1,
            "iterations": self.iterations,
            "wall_time_ms": self.wall_time_ms,
            "certified_gap": self.certified_gap,
        }
        if self.augmentations is not None:
            out["augmentations"] = self.augmentations
        if self.details:
            out["details"] = self.details
        return out


ArrayOrCost = Union[CostMatrix, np.ndarray]
ArrayOrCoupling = Union[Coupling, np.ndarray]
ArrayOrHist = Union[Histogram, np.ndarray]


def as_matrix(obj) -> np.ndarray:
    if isinstance(obj, CostMatrix):
        return obj.entries
    if isinstance(obj, Coupling):
        return obj.plan
    return np.asarray(obj, dtype=float)


def as_vector(obj) -> np.ndarray:
    if isinstance(obj, Histogram):
        return obj.values
    return np.asarray(obj, dtype=float)


def validate_instance(cost, r, c) -> TransportInstance:
    """Build a :class:`TransportInstance`, raising on malformed input.

    Accepts raw arrays or already-constructed ``CostMatrix``/``Histogram``.

    >>> inst = validate_instance([[0, 1], [1, 0]], [0.5, 0.5], [0.5, 0.5])
    >>> inst.cost.max_entry
    1.0
    """
    if not isinstance(cost, CostMatrix):
        cost = CostMatrix(cost)
    if not isinstance(r, Histogram):
        r = Histogram(r)
    if not isinstance(c, Histogram):
        c = Histogram(c)
    return TransportInstance(cost, r, c)


def _check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DimensionMismatch(f"shape {a.shape} does not match {b.shape}")


def transport_cost(C: ArrayOrCost, X: ArrayOrCoupling) -> float:
    """Frobenius inner product of cost and plan."""
    C, X = as_matrix(C), as_matrix(X)
    _check_same_shape(C, X)
    return math.fsum((C * X).ravel())


def entropy(X: ArrayOrCoupling) -> float:
    """Entrywise matrix entropy ``-sum X (log X - 1)`` with ``0 log 0 = 0``."""
    X = as_matrix(X)
    if np.any(X < 0):
        raise NegativeEntry("entropy is defined for nonnegative matrices only")
    pos = X[X > 0]
    return math.fsum((-pos * (np.log(pos) - 1.0)).ravel())


def marginal_residuals(X: ArrayOrCoupling, r: ArrayOrHist, c: ArrayOrHist) -> MarginalResiduals:
    """Signed residuals ``r - X1`` and ``c - X^T 1`` and their combined l1 norm."""
    X, r, c = as_matrix(X), as_vector(r), as_vector(c)
    if X.ndim != 2 or X.shape != (r.size, c.size):
        raise DimensionMismatch(f"plan shape {X.shape} vs marginals ({r.size}, {c.size})")
    er = np.array([r[i] - math.fsum(X[i]) for i in range(X.shape[0])])
    ec = np.array([c[j] - math.fsum(X[:, j]) for j in range(X.shape[1])])
    l1 = math.fsum(np.abs(er)) + math.fsum(np.abs(ec))
    return MarginalResiduals(er, ec, l1)


def product_coupling(r: ArrayOrHist, c: ArrayOrHist) -> np.ndarray:
    """Independent coupling ``r c^T``."""
    return np.outer(as_vector(r), as_vector(c))


def clamp_epsilon(eps: float, c_max: float) -> float:
    """Reject nonpositive tolerances and cap ``eps`` at ``c_max``."""
    from .errors import InvalidEpsilon

    if not (isinstance(eps, (int, float, np.floating)) and math.isfinite(eps) and eps > 0):
        raise InvalidEpsilon(f"epsilon must be a positive finite number, got {eps!r}")
    return min(float(eps), c_max) if c_max > 0 else float(eps)


def require_instance(inst) -> TransportInstance:
    if not isinstance(inst, TransportInstance):
        raise ValidationError("expected a TransportInstance; build one with validate_instance")
    return inst
