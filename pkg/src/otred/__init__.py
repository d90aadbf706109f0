"""Approximate optimal transport through packing LPs and matrix scaling,
plus the reduction from bipartite matching to transport."""

from .core import (
    Coupling,
    CostMatrix,
    Histogram,
    MarginalResiduals,
    SolveReport,
    TransportInstance,
    entropy,
    marginal_residuals,
    transport_cost,
    validate_instance,
)
from .errors import NotConverged, NotScalable, OTError, ValidationError
from .graphs import BipartiteGraph, FractionalMatching, Matching
from .matching import (
    augment_to_maximum,
    extract_fractional_matching,
    matching_to_ot,
    max_matching_via_ot,
    round_fractional_matching,
)
from .oracle import exact_ot, exact_packing_value, hopcroft_karp, network_simplex, vertex_enumeration
from .packing import PackingLP, PackingSolution, build_packing_instance, solve_ot_via_packing, solve_packing
from .rounding import complete_subfeasible, extend_coupling, round_to_polytope, truncate_marginals
from .scaling import (
    Potentials,
    ScalingProblem,
    dual_objective,
    gibbs_kernel_log,
    regularization_parameter,
    sinkhorn_scale,
    solve_ot_via_scaling,
)

__version__ = "0.1.0"
