"""Sub-Riemannian sub-Laplacians, Hamiltonian random walks and their diffusion limit."""
from .fields import BUILTIN_FIELDS, ExpressionField, PhaseField, Polynomial, ScalarField, builtin_field
from .geometry import (
    CompatibilityReport,
    DegenerateRankError,
    HorizontalFactor,
    ManifoldModel,
    ModelEvaluationError,
    PhaseState,
    beta_apply,
    cometric_eval,
    g_apply,
    horizontal_factor,
    horizontal_inner,
    metric_eval,
    sample_horizontal_sphere,
    validate_compatibility,
)
from .hamiltonian import (
    ChristoffelTensor,
    FlowResult,
    IntegrationError,
    cometric_derivatives,
    flow,
    hamiltonian,
    hj_vector_field,
    raised_christoffel,
    second_derivative_along_flow,
)
from .manifolds import (
    EuclideanModel,
    HeisenbergModel,
    euclidean_model,
    heisenberg_flow_exact,
    heisenberg_model,
    load_model,
    load_model_file,
)
from .montecarlo import (
    ConvergenceTable,
    EstimatorReport,
    OracleReport,
    convergence_sweep,
    estimate_semigroup,
    heisenberg_sde_oracle,
    moment_report,
    walk_endpoints,
)
from .sublaplacian import (
    MCEstimate,
    dhj_derivative,
    projection_P,
    sublaplacian_local,
    sublaplacian_sphere_avg,
)
from .walker import WalkConfig, WalkPath, sample_walk, walk_position_at, walk_state_at

__version__ = "0.1.0"
