"""Range-only multipath SLAM with master-virtual-anchor map features."""

from .association import (AssociationMarginals, AssociationProblem,
                          best_measurement, marginals_bp, marginals_enumerate)
from .errors import ConfigError, DegenerateMVA, MvaSlamError, SizeLimit
from .geometry import (Surface, expected_range, mva_from_surface,
                       reflect_point, surface_from_mva, va_from_mva)
from .harness import run_experiment, summarize
from .inference import (AgentBelief, Hyperparams, MvaBelief,
                        draw_robust_mixture, estimate_agent, estimate_mva)
from .metrics import is_converged, mospa, ospa, rmse_over_runs
from .scenario import (AgentState, MeasurementBatch, ScenarioConfig,
                       generate_measurements, generate_trajectory,
                       propagate_cv)
from .slam import MvaSlamFilter

__version__ = "0.1.0"

__all__ = [
    "AgentBelief", "AgentState", "AssociationMarginals", "AssociationProblem",
    "ConfigError", "DegenerateMVA", "Hyperparams", "MeasurementBatch",
    "MvaBelief", "MvaSlamError", "MvaSlamFilter", "ScenarioConfig",
    "SizeLimit", "Surface", "best_measurement", "draw_robust_mixture",
    "estimate_agent", "estimate_mva", "expected_range", "generate_measurements",
    "generate_trajectory", "is_converged", "marginals_bp",
    "marginals_enumerate", "mospa", "mva_from_surface", "ospa",
    "propagate_cv", "reflect_point", "rmse_over_runs", "run_experiment",
    "summarize", "surface_from_mva", "va_from_mva",
]
