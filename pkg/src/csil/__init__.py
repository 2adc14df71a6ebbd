"""Sample-efficient imitation on CartPole via sparse Q-weight recovery."""

__version__ = "0.1.0"

from .cartpole import CartPoleEnv, physics_step
from .features import RBFFeaturizer, fit_featurizer, sample_state_box
from .linear_agent import (QLearningConfig, TrainingDiverged, WeightStack,
                           greedy_action, q_values, train_linear_q)
from .sparse import (Level1Problem, Level2Problem, SolveReport, SolverConfig,
                     build_level1_problem, build_level2_constraints, l0_oracle,
                     rip_diagnostic, solve_level1, solve_level2,
                     solve_level2_nuclear)
from .harness import (Demonstration, EvalSummary, ExperimentConfig,
                      collect_demos, evaluate, hyperparameter_scan,
                      q_difference_correlation, run_experiment, weight_error)

__all__ = [
    "CartPoleEnv", "physics_step",
    "RBFFeaturizer", "fit_featurizer", "sample_state_box",
    "QLearningConfig", "TrainingDiverged", "WeightStack",
    "greedy_action", "q_values", "train_linear_q",
    "Level1Problem", "Level2Problem", "SolveReport", "SolverConfig",
    "build_level1_problem", "build_level2_constraints", "l0_oracle",
    "rip_diagnostic", "solve_level1", "solve_level2", "solve_level2_nuclear",
    "Demonstration", "EvalSummary", "ExperimentConfig",
    "collect_demos", "evaluate", "hyperparameter_scan",
    "q_difference_correlation", "run_experiment", "weight_error",
]
