"""Exact matrix N-soliton fields and their numerical certification.

Construct d x d N-soliton solutions of the matrix modified KdV equation
from spectral data (eigenvalues k_m, weight matrices B_m) through a
finite determinant formula, map them along the Miura/potential chain to
matrix KdV and pKdV, and verify every claimed identity numerically:
PDE residuals by fresh-evaluation finite differences, structural
properties (diagonality, entry activation, gauge covariance), and
conserved-functional candidates.
"""

from .diagnostics import (
    ConservedSeries,
    EnergyPartition,
    MaskedLineError,
    PeakTrack,
    WindowTooSmallError,
    energy_partition,
    functional_series,
    track_peaks,
)
from .evaluate import (
    MatrixField,
    SingularPointError,
    evaluate_grid,
    evaluate_point_det,
    evaluate_point_fast,
    evaluate_points,
    exponential_action,
)
from .linalg import (
    ExpOverflowError,
    SingularMatrixError,
    anticommutator,
    commutator,
    expm,
    lu_det_solve,
    mat_mul,
)
from .scenario_io import (
    PRESET_NAMES,
    ScenarioSchemaError,
    ScenarioSyntaxError,
    parse_scenario,
    preset,
    scenario_to_document,
)
from .spectral import (
    DyadFactorization,
    GridSpec,
    OperatorData,
    Scenario,
    ScenarioValidationError,
    SolitonEntry,
    build_operator_data,
    canonical_factorization,
    random_scenario,
    regauge_factorization,
    validate_scenario,
)
from .verify import (
    QuadratureSpec,
    ResidualReport,
    StencilSpec,
    StencilSingularityError,
    WindowError,
    convergence_study,
    kdv_residual,
    miura_map,
    miura_sign_probe,
    mkdv_residual,
    pkdv_residual,
    potential_map,
    sample_derivatives,
)

__version__ = "0.1.0"

__all__ = [
    "ConservedSeries", "EnergyPartition", "MaskedLineError", "PeakTrack",
    "WindowTooSmallError", "energy_partition", "functional_series",
    "track_peaks", "MatrixField", "SingularPointError", "evaluate_grid",
    "evaluate_point_det", "evaluate_point_fast", "evaluate_points",
    "exponential_action", "ExpOverflowError", "SingularMatrixError",
    "anticommutator", "commutator", "expm", "lu_det_solve", "mat_mul",
    "PRESET_NAMES", "ScenarioSchemaError", "ScenarioSyntaxError",
    "parse_scenario", "preset", "scenario_to_document",
    "DyadFactorization", "GridSpec", "OperatorData", "Scenario",
    "ScenarioValidationError", "SolitonEntry", "build_operator_data",
    "canonical_factorization", "random_scenario", "regauge_factorization",
    "validate_scenario", "QuadratureSpec", "ResidualReport",
    "StencilSpec", "StencilSingularityError", "WindowError",
    "convergence_study", "kdv_residual", "miura_map", "miura_sign_probe",
    "mkdv_residual", "pkdv_residual", "potential_map",
    "sample_derivatives", "__version__",
]
