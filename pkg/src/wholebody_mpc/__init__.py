"""Three-stage convex MPC for humanoid whole-body motion with automatic
selection of supporting hand contacts."""

from .errors import (
    ContactInfeasibleError,
    CycleError,
    InfeasibleTaskError,
    JointLimitError,
    ModelError,
    PlanningError,
    ScenarioError,
    SingularContactError,
    StructuralError,
    UnloadedRobotError,
)
from .loop import CycleConfig, SimTrace, WorldState, run_scenario, step_cycle, verify_trace
from .scenario import Scenario, corpus_names, corpus_path, parse_scenario, serialize_scenario

__version__ = "0.1.0"

__all__ = [
    "ContactInfeasibleError", "CycleError", "InfeasibleTaskError", "JointLimitError",
    "ModelError", "PlanningError", "ScenarioError", "SingularContactError",
    "StructuralError", "UnloadedRobotError",
    "CycleConfig", "SimTrace", "WorldState", "run_scenario", "step_cycle", "verify_trace",
    "Scenario", "corpus_names", "corpus_path", "parse_scenario", "serialize_scenario",
]
