"""Bail-out optimal dividends at a bounded rate for spectrally negative
Levy processes with phase-type jumps."""

from .levy_model import (
    BadPhaseType,
    DriftTooSmall,
    LevyModel,
    ModelFileError,
    MonotonePaths,
    NoConvergence,
    PhaseTypeLaw,
    PoleHit,
    ProblemParams,
    jump_density,
    laplace_exponent,
    laplace_exponent_refracted,
    load_model_file,
    mean_rate,
    phi_root,
    refract,
    validate,
    varphi_root,
)
from .scale_engine import (
    DivergentTail,
    ExpMixture,
    PiecewiseExp,
    RepeatedRoots,
    ScaleSet,
    antiderivative,
    build_scale_set,
    build_W,
    convolve_segment,
    derivative,
    make_Z,
    make_Zbar,
    psi_roots,
    weighted_tail_integral,
)
from .simulator import (
    MCEstimate,
    SimConfig,
    simulate_npv,
    simulate_ruin_laplace,
    truncation_bound,
)
from .solver import (
    BracketFailure,
    Context,
    Solution,
    f_of_b,
    find_threshold,
    g_of_b,
    g_over_h,
    h_of_b,
    make_context,
    refracted_ruin_laplace,
    value_at,
    value_derivative_at,
    value_function,
)
from .verifier import (
    QuadratureFailure,
    VerificationReport,
    check_hjb,
    generator_apply,
    smooth_fit_report,
)

__version__ = "0.1.0"
