"""Mean-field optimal control of interacting followers steered by controlled leaders."""
from .control import OptProblem, OptResult, estimate_cost, optimize, project_K
from .controls import ControlSchedule
from .cost import (
    AtomicCoincidenceWarning,
    CostBreakdown,
    CostSpec,
    chaos_cost_breakdown,
    cost_chaos,
    cost_finite,
    direct_control_cost,
    finite_cost_breakdown,
    lagrangian,
    phi,
    phi_atomic_identity,
)
from .errors import (
    BlowUpError,
    ConfigError,
    ConvergenceError,
    MFControlError,
    NumericalError,
    ParameterError,
    StepSizeError,
    SubsampleRequired,
    UnsupportedSpecError,
)
from .fields import (
    AffineField,
    ConstantKernel,
    FieldSpec,
    GainSpec,
    LinearKernel,
    RadialKernel,
    eval_field,
    eval_gain,
    growth_constant,
    lipschitz_constant,
)
from .fokker_planck import DensityFlow, FPGrid, GridDensity, fp_solve, fp_step, quantize, stable_dt
from .measures import (
    EmpiricalMeasure,
    MeasureFlow,
    moment,
    push_forward,
    subsample,
    wasserstein1,
    wasserstein1_gaussian,
)
from .mckean import MckeanSolution, picard_residual, solve_fixed_nu, solve_mckean
from .noise import NoisePlan
from .particles import (
    EnsembleState,
    EnsembleTrajectory,
    em_step,
    empirical_of,
    simulate_finite,
    write_trajectories_csv,
)
from .problem import GaussianInit, LeaderPoints, MixtureInit, ProblemSpec
from .studies import StudyReport, run_chaos_study, run_fp_crosscheck, run_gamma_study, run_stability_study

__version__ = "0.1.0"
