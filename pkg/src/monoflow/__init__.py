"""monoflow: generate and certify monotone quantities for heat flow.

Build candidate functions from heat-kernel atoms with closure combinators
(sums, tensors, compositions, outer maps, anisotropic geometric means,
convolutions, group averages), derive machine-checked certificates for the
resulting differential inequalities, and verify them numerically: pointwise
residuals, log-convexity margins, and monotone functional traces.
"""

from ._kernels import backend_name
from .bellman import (
    BellmanSpec,
    HarmonicSum,
    Linear,
    LqNormP,
    Power,
    WeightedGeomMean,
    theta_hessian,
)
from .certify import (
    BLDatumReport,
    Certificate,
    FunctionalSpec,
    GammaSpec,
    certify,
    check_bl_datum,
    check_gamma_concave,
    check_lambda_concavity,
    monotone_functional,
)
from .dsl import format_program, lower, parse
from .errors import (
    DimensionMismatch,
    EvalError,
    EvalRangeError,
    LowerError,
    MonoflowError,
    ParseError,
    RuleError,
    SingularMatrixError,
    SubharmonicWeightError,
)
from .nodes import (
    GaussianMixtureAtom,
    Jet2,
    Node,
    aniso_geom_mean,
    bellman_image,
    compose_linear,
    convolve_power,
    eval_jet,
    geom_mean,
    group_average,
    harmonic_sum,
    heat_atom,
    heat_kernel_jet,
    log_hessian,
    lq_norm,
    positive_sum,
    power,
    tensor_product,
    time_power,
)
from .ou import (
    OUCertificate,
    OUExpMixture,
    OUField,
    OUGaussMixture,
    mixture_to_heat_atom,
    ou_certify,
    ou_flow,
)
from .quad import (
    BoxQuadrature,
    CoshWeight,
    FunctionalTrace,
    GroupSampler,
    Weight,
    functional_trace,
    group_o2_elements,
    integrate,
)
from .scenarios import SCENARIOS, ScenarioConfig
from .symmat import (
    LinearMap,
    SymMatrix,
    congruence,
    det,
    direct_sum,
    identity,
    inverse,
    is_psd,
    psd_leq,
    trace,
)
from .verify import (
    Density1D,
    PointCheckSummary,
    bl_residual_decomposition,
    blachman_check,
    check_pointwise,
    conv_nonnegativity_witness,
    dirichlet_energy_trace,
    entropy,
    entropy_trace,
    epi_check,
    explicit_counterexample_laplacian,
    fisher_info,
    li_yau_gap,
    qp_trace,
    supersolution_residual,
)

__version__ = "0.1.0"
