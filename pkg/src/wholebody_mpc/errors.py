"""Exception hierarchy shared by the planning stages."""

from __future__ import annotations


class PlanningError(Exception):
    """Base class for every error raised by the planner."""


class StructuralError(PlanningError, ValueError):
    """Shapes or lengths of the supplied arrays do not agree."""


class ModelError(PlanningError):
    """A model quantity is outside its physical domain (non-PSD cost, NaN state, ...)."""


class UnloadedRobotError(ModelError):
    """The vertical load on the feet, m(cdd_z + g) - f_z, is not positive."""

    def __init__(self, denominator: float, step: int | None = None):
        self.denominator = float(denominator)
        self.step = step
        where = "" if step is None else f" at horizon step {step}"
        super().__init__(
            f"feet are unloaded{where}: m(cdd_z + g) - f_z = {self.denominator:.6g} <= 0"
        )


class SingularContactError(ModelError):
    """Contact point lies on the feet plane, so the tangential force cannot be recovered."""


class JointLimitError(ModelError):
    """A joint configuration lies outside its limits."""


class InfeasibleTaskError(PlanningError):
    """The task admits no solution; ``step`` is the first offending horizon index."""

    def __init__(self, message: str, step: int | None = None):
        self.step = step
        super().__init__(message)


class ContactInfeasibleError(PlanningError):
    """No contact candidate can realize the requested ZMP shift."""


class CycleError(PlanningError):
    """A control cycle failed; carries the failing stage and diagnostics."""

    def __init__(self, stage: str, message: str, *, cycle: int | None = None, diagnostics=None):
        self.stage = stage
        self.cycle = cycle
        self.diagnostics = diagnostics or {}
        prefix = f"[{stage}]" if cycle is None else f"[cycle {cycle}, {stage}]"
        super().__init__(f"{prefix} {message}")


class ScenarioError(PlanningError):
    """A scenario file failed validation; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")
