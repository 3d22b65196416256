"""Numerical laboratory for the radial energy-critical semilinear heat flow
near its ground state in dimension d >= 7: spectral analysis of the
linearized operator, adaptive evolution with blow-up and dissipation
detection, soliton modulation tracking, self-similar diagnostics, minimal
solution approximants, and threshold experiments."""

from .errors import (
    ConfigurationError,
    ConstructionFailure,
    CritHeatError,
    DecompositionFailure,
    DegenerateInput,
    DiscretizationFailure,
    DomainExceeded,
    InsufficientData,
)
from .groundstate import (
    Parameters,
    RadialField,
    RadialGrid,
    eval_dr_q,
    eval_lambda_q,
    eval_q,
    eval_v,
    kappa_const,
    make_radial_grid,
)
from .modulation import decompose, energy_diagnostics, track
from .minimal import cauchy_in_n, construct, forward_fate, jensen_lower_bound
from .selfsim import (
    blowup_criterion,
    energy_w,
    i_w,
    lyapunov_check,
    make_selfsim_grid,
    rate_check,
    renormalize,
)
from .solver import (
    RunRecord,
    SolverConfig,
    comparison_check,
    energy,
    estimate_blowup_time,
    evolve,
    step,
)
from .spectral import (
    SpectralData,
    assemble_h,
    build_psi0,
    coercivity_estimate,
    compute_spectral_data,
    e0_by_shooting,
    ground_eig,
    hardy_check,
    zero_modes,
)
from .experiments import (
    ExperimentConfig,
    Verdict,
    bisect_threshold,
    build_workspace,
    classify,
    make_initial_data,
    probe_type2_exclusion,
    run_config,
)

__version__ = "0.1.0"
