"""Sparse minimum-precision sensor scheduling for multi-agent tracking."""

from .discretization import (ContinuousNoiseSpec, DiscreteLtvSystem, GaussianSeries,
                             GaussianState, build_discrete_system,
                             discretize_process_noise, propagate_mean_cov,
                             state_transition)
from .dynamics import (AgentKind, AgentModel, MultiAgentConfig, NominalTrajectory,
                       jacobian, propagate_nominal, vector_field)
from .kalman import (BatchSystem, batch_posterior_stats, build_batch, kf_predict,
                     kf_update, optimal_reduced_gain)
from .precision_opt import (PrecisionProblem, PrecisionSchedule, ScheduleStatus,
                            SparsityReport, assemble_lmi, reweighted_solve,
                            solve_precisions, sparsity_report)
from .sensing import (AvailabilityMask, SensingTopology, apply_mask,
                      measurement_jacobian, range_measurement)
from .scenario import (BatchContext, ScenarioConfig, build_context, load_scenario,
                       parse_scenario, problem_for, reference_config)

__version__ = "0.1.0"

__all__ = [
    "AgentKind", "AgentModel", "AvailabilityMask", "BatchContext", "BatchSystem",
    "ContinuousNoiseSpec", "DiscreteLtvSystem", "GaussianSeries", "GaussianState",
    "MultiAgentConfig", "NominalTrajectory", "PrecisionProblem", "PrecisionSchedule",
    "ScenarioConfig", "ScheduleStatus", "SensingTopology", "SparsityReport",
    "apply_mask", "assemble_lmi", "batch_posterior_stats", "build_batch",
    "build_context", "build_discrete_system", "discretize_process_noise",
    "jacobian", "kf_predict", "kf_update", "load_scenario", "measurement_jacobian",
    "optimal_reduced_gain", "parse_scenario", "problem_for", "propagate_mean_cov",
    "propagate_nominal", "range_measurement", "reference_config", "reweighted_solve",
    "solve_precisions", "sparsity_report", "state_transition", "vector_field",
]
