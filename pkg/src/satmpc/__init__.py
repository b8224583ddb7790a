"""Saturation-aware nonlinear MPC toolkit.

Discrete-time NMPC with box constraints and a quadratic terminal set, plus a
controller variant that reuses saturated open-loop input prefixes instead of
re-solving, and a benchmark harness that quantifies what that reuse saves.
"""

__version__ = "0.1.0"

from .control import (CLASSIC, EVERY_RESOLVE, FIRST_STEP_ONLY, INFEASIBLE,
                      MAX_STEPS, REACHED_TERMINAL, REUSE_SATURATED,
                      ClosedLoopResult, ControllerMode, ReuseWindow,
                      cost_performance, result_to_csv, run_closed_loop,
                      saturated_prefix)
from .experiments import (BatchStats, ClassifiedSample, ExperimentConfig,
                          approximate_feasible_boundary, emit_reports,
                          run_batch, run_disturbed_batch, run_full_pipeline,
                          sample_feasible)
from .model import (DisturbanceBounds, DynamicsModel, benchmark_model,
                    disturbance_sequence, model_from_config,
                    model_from_descriptor, step, step_disturbed)
from .ocp import (OcpSpec, benchmark_ocp, constraints, in_terminal_set,
                  load_spec, rollout, save_spec, spec_from_json, spec_to_json,
                  stage_cost, terminal_cost, total_cost)
from .solver import INFEASIBLE as INFEASIBLE_STATUS
from .solver import (MAX_ITER, OPTIMAL, ActiveSet, NlpSolution, SolverConfig,
                     check_feasible, extract_active_set, grid_search_oracle,
                     solve)

__all__ = [
    "__version__",
    # model
    "DynamicsModel", "DisturbanceBounds", "benchmark_model",
    "model_from_config", "model_from_descriptor", "step", "step_disturbed",
    "disturbance_sequence",
    # ocp
    "OcpSpec", "benchmark_ocp", "stage_cost", "terminal_cost", "total_cost",
    "rollout", "constraints", "in_terminal_set", "spec_to_json",
    "spec_from_json", "load_spec", "save_spec",
    # solver
    "SolverConfig", "NlpSolution", "ActiveSet", "solve", "check_feasible",
    "extract_active_set", "grid_search_oracle", "OPTIMAL", "MAX_ITER",
    "INFEASIBLE_STATUS",
    # control
    "ControllerMode", "ReuseWindow", "ClosedLoopResult", "saturated_prefix",
    "run_closed_loop", "cost_performance", "result_to_csv", "CLASSIC",
    "REUSE_SATURATED", "FIRST_STEP_ONLY", "EVERY_RESOLVE", "REACHED_TERMINAL",
    "MAX_STEPS", "INFEASIBLE",
    # experiments
    "ExperimentConfig", "BatchStats", "ClassifiedSample", "sample_feasible",
    "run_batch", "run_disturbed_batch", "approximate_feasible_boundary",
    "emit_reports", "run_full_pipeline",
]
