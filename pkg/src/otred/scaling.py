"""Entropic regularisation and matrix scaling.

The regularised transport problem at temperature ``eta`` is dual to scaling
the Gibbs kernel ``exp(-C / eta)`` to marginals ``(r, c)``. Kernel entries
can be far below the smallest positive double, so the kernel is only ever
held as its logarithm and combined with the potentials before any
exponentiation.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import (
    MarginalResiduals,
    SolveReport,
    TransportInstance,
    as_matrix,
    as_vector,
    clamp_epsilon,
    marginal_residuals,
    product_coupling,
    require_instance,
    transport_cost,
)
from .errors import (
    DimensionMismatch,
    InvalidDimension,
    InvalidEpsilon,
    NotConverged,
    NotScalable,
    ValidationError,
)
from .rounding import extend_coupling, round_to_polytope, truncate_marginals

logger = logging.getLogger(__name__)


def _lse_rows(a: np.ndarray) -> np.ndarray:
    top = a.max(axis=1)
    safe = np.where(np.isfinite(top), top, 0.0)
    with np.errstate(divide="ignore"):
        return np.log(np.exp(a - safe[:, None]).sum(axis=1)) + safe


def _lse_cols(a: np.ndarray) -> np.ndarray:
    top = a.max(axis=0)
    safe = np.where(np.isfinite(top), top, 0.0)
    with np.errstate(divide="ignore"):
        return np.log(np.exp(a - safe[None, :]).sum(axis=0)) + safe


def _lse_all(a: np.ndarray) -> float:
    top = float(a.max())
    if not math.isfinite(top):
        return top
    return math.log(math.fsum(np.exp(a - top).ravel())) + top


@dataclass(frozen=True)
class ScalingProblem:
    """Log-domain kernel ``log A`` with row and column targets.

    ``log_entry_floor`` is ``log max 1/A_ij`` and ``log_target_floor`` is
    ``log max 1/min(r_i, c_j)``; the plain values are available as
    ``entry_floor`` / ``target_floor`` but overflow to ``inf`` for cold
    kernels.
    """

    log_matrix: np.ndarray
    row_target: np.ndarray
    col_target: np.ndarray
    allow_zeros: bool = False
    log_entry_floor: float = field(init=False)
    log_target_floor: float = field(init=False)
    mass: float = field(init=False)

    def __post_init__(self):
        L = np.array(self.log_matrix, dtype=float, copy=True)
        r = np.array(as_vector(self.row_target), dtype=float, copy=True)
        c = np.array(as_vector(self.col_target), dtype=float, copy=True)
        if L.ndim != 2 or L.shape != (r.size, c.size):
            raise DimensionMismatch(f"kernel {L.shape} vs targets ({r.size}, {c.size})")
        if np.any(np.isnan(L)) or np.any(L == np.inf):
            raise ValidationError("log kernel must be finite or -inf")
        if np.any(L == -np.inf) and not self.allow_zeros:
            raise ValidationError("log kernel has -inf entries; pass allow_zeros=True to permit them")
        if L.max() > 1e-12:
            raise ValidationError("kernel entries must not exceed 1")
        if r.max() > 1 or c.max() > 1 or r.min() < 0 or c.min() < 0:
            raise ValidationError("targets must lie in [0, 1]")
        if abs(math.fsum(r) - math.fsum(c)) > 1e-12:
            raise ValidationError("row and column targets must carry the same mass")
        for a in (L, r, c):
            a.setflags(write=False)
        object.__setattr__(self, "log_matrix", L)
        object.__setattr__(self, "row_target", r)
        object.__setattr__(self, "col_target", c)
        object.__setattr__(self, "log_entry_floor", float(-L.min()))
        low = min(r.min(), c.min())
        object.__setattr__(self, "log_target_floor", math.inf if low <= 0 else -math.log(low))
        object.__setattr__(self, "mass", math.exp(_lse_all(L)))

    @property
    def shape(self):
        return self.log_matrix.shape

    @property
    def entry_floor(self) -> float:
        with np.errstate(over="ignore"):
            return float(np.exp(self.log_entry_floor))

    @property
    def target_floor(self) -> float:
        return math.exp(self.log_target_floor) if math.isfinite(self.log_target_floor) else math.inf


@dataclass(frozen=True)
class Potentials:
    """Log-domain scaling exponents; ``M_ij = A_ij exp(x_i + y_j)``."""

    x: np.ndarray
    y: np.ndarray
    iterations: int = 0

    def __post_init__(self):
        x = np.array(self.x, dtype=float, copy=True)
        y = np.array(self.y, dtype=float, copy=True)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValidationError("potentials must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    def shifted(self, alpha: float) -> "Potentials":
        return Potentials(self.x + alpha, self.y - alpha, self.iterations)

    def normalized(self) -> "Potentials":
        """Shift so that ``min x = 0``."""
        return self.shifted(-float(self.x.min()))

    @property
    def sup_norm(self) -> float:
        return float(max(np.abs(self.x).max(), np.abs(self.y).max()))


def regularization_parameter(eps: float, n: int) -> float:
    """Temperature ``eps / (4 log n)``, chosen so that ``2 eta log n = eps / 2``."""
    if n < 2:
        raise InvalidDimension(f"need n >= 2 for a positive log n, got {n}")
    if not eps > 0:
        raise InvalidEpsilon(f"epsilon must be positive, got {eps!r}")
    return eps / (4.0 * math.log(n))


def gibbs_kernel_log(C, eta: float, r=None, c=None) -> ScalingProblem:
    """Scaling problem for the kernel ``exp(-C / eta)``.

    Targets default to uniform marginals when ``r``/``c`` are omitted.
    """
    C = as_matrix(C)
    if not eta > 0:
        raise ValidationError(f"eta must be positive, got {eta!r}")
    n, m = C.shape
    r = np.full(n, 1.0 / n) if r is None else as_vector(r)
    c = np.full(m, 1.0 / m) if c is None else as_vector(c)
    return ScalingProblem(-C / eta, r, c)


def scaled_matrix(P: ScalingProblem, z: Potentials) -> np.ndarray:
    return np.exp(P.log_matrix + z.x[:, None] + z.y[None, :])


def dual_objective(P: ScalingProblem, z: Potentials) -> float:
    """``sum_ij A_ij exp(x_i + y_j) - r.x - c.y``."""
    if z.x.size != P.shape[0] or z.y.size != P.shape[1]:
        raise DimensionMismatch("potentials do not match the kernel shape")
    total = math.exp(_lse_all(P.log_matrix + z.x[:, None] + z.y[None, :]))
    return total - math.fsum(P.row_target * z.x) - math.fsum(P.col_target * z.y)


def sinkhorn_scale(
    P: ScalingProblem,
    eps_prime: float,
    max_iters: int = 100_000,
    init: Optional[Potentials] = None,
    callback: Optional[Callable[[np.ndarray, np.ndarray], None]] = None,
) -> tuple[Potentials, MarginalResiduals]:
    """Log-domain Sinkhorn/RAS scaling to l1 marginal error ``eps_prime``.

    Alternates an exact row update (row sums hit ``r``) and an exact column
    update (column sums hit ``c``), testing ``|M1 - r|_1 + |M^T1 - c|_1``
    after each half-step. ``callback(x, y)`` is invoked after every
    half-step. ``max_iters`` counts full row+column sweeps.
    """
    if not eps_prime > 0:
        raise InvalidEpsilon(f"tolerance must be positive, got {eps_prime!r}")
    L, r, c = P.log_matrix, P.row_target, P.col_target
    if np.any(r <= 0) or np.any(c <= 0):
        raise NotScalable("targets must be strictly positive")
    if np.any(np.all(L == -np.inf, axis=1)) or np.any(np.all(L == -np.inf, axis=0)):
        raise NotScalable("kernel has an identically zero row or column")
    log_r, log_c = np.log(r), np.log(c)
    n, m = L.shape
    x = np.zeros(n) if init is None else init.x.copy()
    y = np.zeros(m) if init is None else init.y.copy()

    # initial column log-sums given x, used to test the starting point
    col_lse = _lse_cols(L + x[:, None])
    row_lse = _lse_rows(L + y[None, :])
    res = np.abs(np.exp(row_lse + x) - r).sum() + np.abs(np.exp(col_lse + y) - c).sum()
    best = res
    sweeps = 0
    if res > eps_prime:
        for sweeps in range(1, max_iters + 1):
            x = log_r - row_lse
            col_lse = _lse_cols(L + x[:, None])
            if callback is not None:
                callback(x, y)
            res = np.abs(np.exp(col_lse + y) - c).sum()
            best = min(best, res)
            if res <= eps_prime:
                break
            y = log_c - col_lse
            row_lse = _lse_rows(L + y[None, :])
            if callback is not None:
                callback(x, y)
            res = np.abs(np.exp(row_lse + x) - r).sum()
            best = min(best, res)
            if res <= eps_prime:
                break
        else:
            raise NotConverged(
                f"Sinkhorn did not reach l1 residual {eps_prime:.3g} in {max_iters} sweeps "
                f"(best {best:.3g})",
                report={"iterations": max_iters, "best_residual": float(best), "potentials": (x, y)},
            )
    z = Potentials(x, y, sweeps)
    return z, marginal_residuals(scaled_matrix(P, z), r, c)


def l2_to_l1_tolerance(eps: float, n: int) -> float:
    """Squared-l2 tolerance ``eps^2 / (2n)`` that implies an l1 residual of ``eps``."""
    if not eps > 0:
        raise InvalidEpsilon(f"epsilon must be positive, got {eps!r}")
    if n < 1:
        raise InvalidDimension(f"n must be positive, got {n}")
    return eps * eps / (2.0 * n)


def potential_radius(n: int, nu: float = 1.0, xi: float = 1.0, log_nu: Optional[float] = None) -> float:
    """``2 log(n nu xi)``: sup-norm bound on some optimal pair of potentials.

    For cold kernels ``nu`` overflows; pass ``log_nu`` instead.
    """
    if log_nu is None:
        if nu < 1:
            raise ValidationError("nu must be >= 1")
        log_nu = math.log(nu)
    if xi < 1 or n < 1:
        raise ValidationError("need n >= 1 and xi >= 1")
    return 2.0 * (math.log(n) + log_nu + math.log(xi))


def default_iteration_cap(n: int, c_max: float, eps: float) -> int:
    return int(math.ceil(50.0 * (math.log(max(n, 2)) + c_max / eps) ** 2))


ScalingOracle = Callable[..., tuple]


def _annealed_potentials(C, r, c, eta, c_max, eps_prime, oracle, max_iters):
    """Warm start from a geometric ladder of hotter kernels.

    Potentials are carried across temperatures in cost units, i.e.
    ``x * eta_old / eta_new``. Rungs only need a loose residual; a rung that
    hits its cap still hands its last iterate on.
    """
    z, sweeps = None, 0
    hot = c_max / 4.0
    while hot > 4.0 * eta:
        P = ScalingProblem(-C / hot, r, c)
        tol = max(eps_prime, 0.1 * hot / c_max)
        try:
            z_new, _ = oracle(P, tol, max_iters=max_iters, init=z)
        except NotConverged as exc:
            x, y = exc.report["potentials"]
            z_new = Potentials(x, y, max_iters)
        sweeps += z_new.iterations
        nxt = max(hot / 4.0, eta)
        z = Potentials(z_new.x * hot / nxt, z_new.y * hot / nxt)
        hot = nxt
    if z is not None and hot != eta:
        z = Potentials(z.x * hot / eta, z.y * hot / eta)
    return z, sweeps


def solve_ot_via_scaling(
    inst: TransportInstance,
    eps: float,
    oracle: Optional[ScalingOracle] = None,
    max_iters: Optional[int] = None,
    anneal: bool = True,
) -> tuple[np.ndarray, SolveReport]:
    """Additive ``eps``-optimal coupling through entropic matrix scaling.

    Half of ``eps`` pays for dropping marginal entries below
    ``eps / (4 max(C) n)``; the other half is split evenly between the entropic
    bias ``2 eta log n`` and the rounding loss of an oracle residual
    ``eps / (16 max(C))``.
    """
    inst = require_instance(inst)
    start = time.perf_counter()
    oracle = sinkhorn_scale if oracle is None else oracle
    c_max = inst.cost.max_entry
    eps = clamp_epsilon(eps, c_max)
    n_rows, n_cols = inst.shape
    n = max(n_rows, n_cols)
    details: dict = {}
    sweeps = 0

    if c_max <= 0 or min(n_rows, n_cols) == 1:
        # zero cost or a single row/column: the product plan is the only sensible answer
        Y = product_coupling(inst.r, inst.c)
        details["short_circuit"] = "zero cost" if c_max <= 0 else "unique coupling"
    else:
        half = eps / 2.0
        tmap = truncate_marginals(inst.r, inst.c, half, c_max)
        rt, ct = tmap.truncated_row.values, tmap.truncated_col.values
        Ct = inst.C[np.ix_(tmap.row_support, tmap.col_support)]
        eta = regularization_parameter(half, n)
        eps_prime = half / (8.0 * c_max)
        cap = default_iteration_cap(n, c_max, eps) if max_iters is None else max_iters
        init = None
        if anneal:
            init, sweeps = _annealed_potentials(Ct, rt, ct, eta, c_max, eps_prime, oracle, cap)
        P = ScalingProblem(-Ct / eta, rt, ct)
        try:
            z, res = oracle(P, eps_prime, max_iters=cap, init=init)
        except NotConverged as exc:
            exc.report = dict(exc.report)
            exc.report.pop("potentials", None)
            exc.report.update(method="scaling", epsilon=eps, eta=eta, eps_prime=eps_prime)
            raise
        sweeps += z.iterations
        Bt = scaled_matrix(P, z)
        Xt = round_to_polytope(Bt, rt, ct, Ct)
        Y = extend_coupling(Xt, tmap, inst.r, inst.c)
        details.update(
            eta=eta,
            eps_prime=eps_prime,
            oracle_residual=res.l1_total,
            kept_rows=int(tmap.row_support.size),
            kept_cols=int(tmap.col_support.size),
            mass_factor=tmap.mass_factor,
        )
    res_full = marginal_residuals(Y, inst.r, inst.c)
    report = SolveReport(
        method="scaling",
        epsilon=eps,
        cost=transport_cost(inst.C, Y),
        residual_l1=res_full.l1_total,
        iterations=sweeps,
        wall_time_ms=int(round(1000 * (time.perf_counter() - start))),
        details=details,
    )
    return Y, report
