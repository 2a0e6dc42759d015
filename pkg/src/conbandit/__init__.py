"""Pure exploration for bandits whose recommended policy must satisfy linear
constraints: LP geometry, information projections, characteristic times,
samplers and an experiment harness."""
from .alt import AltSet, ProjectionResult, alt_value, project_gaussian, project_numeric
from .divergences import binary_kl, confidence_interval, kl
from .explorers import SAMPLERS, StoppingConfig, run_once
from .hardness import analyze, characteristic_time_bounds, conditioning_bound, solve_oracle_allocation
from .model import (
    BanditInstance,
    ConBanditError,
    ExplorationScenario,
    FeasiblePolytope,
    Problem,
    RewardFamily,
    VertexPolicy,
    validate_instance,
)
from .polytope import enumerate_neighbors, euclidean_project, solve_optimal_policy

__all__ = [
    "AltSet", "ProjectionResult", "alt_value", "project_gaussian", "project_numeric",
    "binary_kl", "confidence_interval", "kl",
    "SAMPLERS", "StoppingConfig", "run_once",
    "analyze", "characteristic_time_bounds", "conditioning_bound", "solve_oracle_allocation",
    "BanditInstance", "ConBanditError", "ExplorationScenario", "FeasiblePolytope", "Problem",
    "RewardFamily", "VertexPolicy", "validate_instance",
    "enumerate_neighbors", "euclidean_project", "solve_optimal_policy",
]
