"""Generalized Weyl/Wigner transforms, star-Omega algebras and phase-space
Lindblad kinetics."""

from .grid import (
    GridFunction,
    PhaseGrid,
    SpectralFunction,
    forward_ft,
    integrate,
    inverse_ft,
    make_grid,
    pairing,
)
from .orderings import (
    JointWeight,
    WeightFunction,
    check_classical_limit,
    check_factorization,
    check_hermiticity,
    check_marginal_condition,
    check_trace_pairing,
    eval_weight,
    gauss,
    inverse_kernel_omega,
    lambda_family,
    product,
    weyl,
)
from .transforms import (
    OperatorMatrix,
    PositionBasis,
    PureState,
    dequantize,
    from_weyl_symbol,
    marginals,
    positivity_witness,
    quantize,
    to_weyl_symbol,
    trace_one,
    trace_pair,
)
from .star import (
    anti_bracket,
    bracket,
    lambda_star,
    nested_ops,
    star,
    triple_star,
    u_inv,
    u_map,
)
from .symbolic import (
    CPolynomial,
    NCPolynomial,
    lambda_order,
    normal_order,
    parse_poly,
    realize_matrix,
    star_poly,
    weyl_order,
)
from .kinetics import (
    CorrelationData,
    EvolutionState,
    LindbladModel,
    assemble_weak_coupling_model,
    bohr_decompose,
    build_dissipator_fourier,
    build_generator,
    correlation_spectrum,
    diagram_commutes,
    evolve,
    factor_correlation,
    oracle_evolve_matrix,
    psd_check,
)
from .bipartite import BipartiteGrid, BipartiteModel, projection_checks
from .config import RunConfig, parse_config
from .io import read_myl, write_myl

__all__ = [
    "BipartiteGrid", "BipartiteModel", "CPolynomial", "CorrelationData", "EvolutionState",
    "GridFunction", "JointWeight", "LindbladModel", "NCPolynomial", "OperatorMatrix",
    "PhaseGrid", "PositionBasis", "PureState", "RunConfig", "SpectralFunction", "WeightFunction",
    "anti_bracket", "assemble_weak_coupling_model", "bohr_decompose", "bracket",
    "build_dissipator_fourier", "build_generator", "check_classical_limit", "check_factorization",
    "check_hermiticity", "check_marginal_condition", "check_trace_pairing", "correlation_spectrum",
    "dequantize", "diagram_commutes", "eval_weight", "evolve", "factor_correlation", "forward_ft",
    "from_weyl_symbol", "gauss", "integrate", "inverse_ft", "inverse_kernel_omega", "lambda_family",
    "lambda_order", "lambda_star", "make_grid", "marginals", "nested_ops", "normal_order",
    "oracle_evolve_matrix", "pairing", "parse_config", "parse_poly", "positivity_witness", "product",
    "projection_checks", "psd_check", "quantize", "read_myl", "realize_matrix", "star", "star_poly",
    "to_weyl_symbol", "trace_one", "trace_pair", "triple_star", "u_inv", "u_map", "weyl",
    "weyl_order", "write_myl",
]

__version__ = "0.1.0"
