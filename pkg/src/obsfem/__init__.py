"""Finite elements for the Poisson problem with noisy boundary observations.

The Dirichlet data is known only through point values g_i = g0(x_i) + e_i
on the boundary; the discrete problem enforces it weakly with a Lagrange
multiplier and an empirical quadrature pairing built from the observation
sites.  See the README for the governing formulation and usage.
"""

from .analysis import (
    ConvergenceTable,
    ErrorReport,
    ManufacturedCase,
    RateEstimate,
    TailReport,
    build_mesh,
    compute_errors,
    estimate_rates,
    run_case,
    run_study,
    sine_case,
    tail_study,
)
from .assembly import (
    FieldSpace,
    MultiplierSpace,
    SaddleSystem,
    assemble_coupling,
    assemble_coupling_matrix,
    assemble_data_vector,
    assemble_load,
    assemble_stiffness,
    boundary_mass,
    build_saddle_system,
    export_matrix_market,
    mesh_dependent_norms,
    multiplier_at_sites,
    trace_evaluate,
    trace_matrix,
)
from .mesh import (
    BoundaryElement,
    CircularArc,
    MeshError,
    QualityReport,
    TriMesh,
    boundary_point,
    build_disk_mesh,
    build_square_mesh,
    mesh_quality,
    read_mesh_text,
    write_mesh_text,
)
from .observations import (
    NoiseModel,
    ObservationSet,
    Placement,
    UniformityReport,
    build_observation_set,
    dump_observations_csv,
    empirical_inner_product,
    empirical_norm,
    observe,
    place_measurements,
    place_points,
    quadrature_weights,
    sample_noise,
    uniformity_report,
)
from .solver import SaddleSolution, SingularSystemError, solve_saddle

__version__ = "0.1.0"
