"""Perturbation of non-densely defined generators, with age-structured population models."""

from .age import (
    AgeModelSpec,
    BirthPath,
    BoundaryKernel,
    SimulationResult,
    ambient_resolvent_norm,
    flux_kernel,
    model_resolvent_matrix,
    resolvent_power,
    scalar_spec,
    solve_renewal,
    stability_report,
    truncation_age,
    upwind_oracle,
)
from .core import (
    EvolutionFamily,
    IntegratedSemigroupPath,
    SemigroupPath,
    TimeGrid,
    age_integrated_semigroup,
    build_evolution_family,
    howland_apply,
    howland_resolvent,
    integrated_from_semigroup,
    laplace_resolvent,
    matrix_semigroup,
)
from .dyson import (
    AgeModelKernel,
    ClassicalKernel,
    DiamondKernel,
    SeriesTerm,
    dyson_term,
    dyson_terms,
    mr_delta_estimate,
    perturbed_semigroup,
    perturbed_semigroup_details,
    quasi_hy_check,
)
from .errors import (
    ConsistencyWarning,
    ContractionFailure,
    FitDomainError,
    GridAlignmentWarning,
    InvalidInput,
    NdpertError,
    NoRootInWindow,
    PreconditionViolation,
    ResolventDomainError,
    SpectrumProximity,
    StepFailure,
)
from .kernels import BACKEND
from .spectral import (
    Hypotheses,
    ResolventScan,
    ScanPath,
    SpectralReport,
    growth_fit,
    lotka_roots,
    matrix_resolvent,
    perturbed_resolvent,
    resolvent_decay_scan,
    subconvolutive_bound,
    transfer_report,
)

__version__ = "0.1.0"

__all__ = [
    "AgeModelKernel",
    "AgeModelSpec",
    "BACKEND",
    "BirthPath",
    "BoundaryKernel",
    "ClassicalKernel",
    "ConsistencyWarning",
    "ContractionFailure",
    "DiamondKernel",
    "EvolutionFamily",
    "FitDomainError",
    "GridAlignmentWarning",
    "Hypotheses",
    "IntegratedSemigroupPath",
    "InvalidInput",
    "NdpertError",
    "NoRootInWindow",
    "PreconditionViolation",
    "ResolventDomainError",
    "ResolventScan",
    "ScanPath",
    "SemigroupPath",
    "SeriesTerm",
    "SimulationResult",
    "SpectralReport",
    "SpectrumProximity",
    "StepFailure",
    "TimeGrid",
    "__version__",
    "age_integrated_semigroup",
    "ambient_resolvent_norm",
    "build_evolution_family",
    "dyson_term",
    "dyson_terms",
    "flux_kernel",
    "growth_fit",
    "howland_apply",
    "howland_resolvent",
    "integrated_from_semigroup",
    "laplace_resolvent",
    "lotka_roots",
    "matrix_resolvent",
    "matrix_semigroup",
    "model_resolvent_matrix",
    "mr_delta_estimate",
    "perturbed_resolvent",
    "perturbed_semigroup",
    "perturbed_semigroup_details",
    "quasi_hy_check",
    "resolvent_decay_scan",
    "resolvent_power",
    "scalar_spec",
    "solve_renewal",
    "stability_report",
    "subconvolutive_bound",
    "transfer_report",
    "truncation_age",
    "upwind_oracle",
]
