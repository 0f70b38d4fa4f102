"""Scott-Vogelius type Stokes elements on triangular meshes.

Core capabilities: conforming triangulations with vertex-patch machinery,
the singularity measure and critical-vertex diagnostics, broken polynomial
pressure spaces with trace constraints and their pressure-improved
modifications, divergence-free Stokes solves, and an experiment harness for
stability, orthogonality, and convergence studies.
"""

from .criticality import (
    CriticalityReport,
    companions,
    criticality_report,
    critical_sets,
    extended_regions_and_overlap,
    robinson_classify,
    theta,
    theta_min,
)
from .errors import (
    AllVerticesCritical,
    DegenerateTriangle,
    InvalidParameter,
    MissingCompanion,
    NonConformingMesh,
    NotRobinson,
    ParseError,
    SingularGram,
    SingularSystem,
    SvStokesError,
    UnknownCase,
    UnknownTriangle,
    UnknownVertex,
)
from .experiments import (
    ManufacturedCase,
    StudyResult,
    convergence_study,
    divergence_vs_eta,
    manufactured,
    property_suites,
)
from .mesh import (
    Mesh,
    VertexPatch,
    cell_centers,
    generate_family,
    parse_mesh,
    serialize_mesh,
    shape_regularity,
    triangle_neighborhood,
    vertex_patch,
)
from .polynomials import (
    BrokenPolynomial,
    QuadratureRule,
    barycentric,
    chebyshev_eval,
    critical_function,
    extension_eval,
    gamma_k,
    jacobi_eval,
    k_lambda_diam,
    k_lambda_point,
    mean_value_zero,
    quadrature,
)
from .pressure import (
    CorrectionFunctional,
    PressureSpaceBasis,
    build_full_space,
    build_reduced_space,
    complement_basis,
    correction_functional,
    decompose_against,
    f_z,
    functional_Atz,
    inject_modified,
    record_functional_norms,
    riesz_representative,
)
from .stokes import (
    StokesSolution,
    VelocitySpace,
    assemble,
    atz_div,
    divergence_norm,
    infsup_estimate,
    postprocess_pressure,
    solve_stokes,
    velocity_space,
)

__version__ = "0.1.0"
