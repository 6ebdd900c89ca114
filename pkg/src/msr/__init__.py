"""Signal recovery from randomly positioned noisy cyclic windows by matching
shift-invariant moments, with an EM baseline and experiment drivers."""

from .em import EmConfig, EmReport, e_step, em_fit, log_likelihood, m_step
from .invariants import (
    InvariantFeatures,
    UniformInvariantFeatures,
    empirical_moments,
    empirical_moments_uniform,
    feature_distance,
    population_moments,
    population_moments_uniform,
    to_uniform,
)
from .model import (
    AlignmentResult,
    ObservationSet,
    align_and_mse,
    cyclic_mask,
    cyclic_shift,
    generate_observations,
)
from .objective import ObjectivePoint, Weights, finite_diff_check, grad, grad_uniform, loss, loss_uniform
from .solver import (
    SolveReport,
    SolverConfig,
    TrialBatchReport,
    min_window_length,
    multi_trial,
    project_simplex,
    random_init,
    solve_msr,
)

__version__ = "0.1.0"
