"""Topology optimization under finitely many load scenarios.

Mean and mean-plus-std compliance objectives evaluated exactly or with
randomized trace and diagonal estimators, optimized by MMA under
continuation SIMP.
"""

from .config import ConfigError, RunConfig, load_config
from .continuation import ContinuationError, ContinuationSchedule, continuation_run
from .fem import (
    AssemblyError,
    GlobalSystem,
    GroundMesh,
    assemble_and_factorize,
    cantilever_mesh,
    element_stiffness_q4,
    solve_multi,
)
from .mma import MmaError, MmaParams, kkt_residual_scaled, mma_solve
from .probing import ProbingSet, hadamard_probes, rademacher_probes
from .problem import ScenarioProblem
from .runner import ComplianceReport, accuracy_profile, ratio_histograms, run
from .scenarios import LoadScenarioSet, export_scenarios, import_scenarios, sample_scenarios
from .simp import DensityField, FilterMatrix, backprop_chain, build_filter, forward_chain
from .stats import ComplianceStats, mean_std_objective, stat_partials, stats

__version__ = "0.1.0"

__all__ = [
    "AssemblyError", "ComplianceReport", "ComplianceStats", "ConfigError", "ContinuationError",
    "ContinuationSchedule", "DensityField", "FilterMatrix", "GlobalSystem", "GroundMesh",
    "LoadScenarioSet", "MmaError", "MmaParams", "ProbingSet", "RunConfig", "ScenarioProblem",
    "accuracy_profile", "assemble_and_factorize", "backprop_chain", "build_filter",
    "cantilever_mesh", "continuation_run", "element_stiffness_q4", "export_scenarios",
    "forward_chain", "hadamard_probes", "import_scenarios", "kkt_residual_scaled", "load_config",
    "mean_std_objective", "mma_solve", "rademacher_probes", "ratio_histograms", "run",
    "sample_scenarios", "solve_multi", "stat_partials", "stats",
]
