"""Exception hierarchy for tssim.

Errors are split by contract: structural problems (dangling references,
dimension mismatches), bad parameter values, case-file problems, and runtime
failures that carry diagnostic payloads (power-flow mismatch, step statistics,
pivot info).
"""


class TssimError(Exception):
    """Base class for all tssim errors."""


class StructuralError(TssimError):
    """Dangling references, dimension mismatches, missing slack bus, etc."""


class ParameterError(TssimError):
    """A parameter value violates its documented invariant."""


class CaseParseError(TssimError):
    """Case or scenario file does not match the documented schema."""

    def __init__(self, message, path=None, record=None):
        detail = message
        if path is not None:
            detail = f"{path}: {detail}"
        if record is not None:
            detail = f"{detail} (record: {record})"
        super().__init__(detail)
        self.path = path
        self.record = record


class CaseValidationError(TssimError):
    """A parsed record violates a model invariant; names the record."""


class InitializationError(TssimError):
    """Device equilibrium initialization failed; names the device."""


class ConfigurationError(TssimError):
    """Bad formulation/solver configuration (unknown split block, ...)."""


class EventError(TssimError):
    """Disturbance cannot be applied (wrong status, missing target, ...)."""


class PowerFlowError(TssimError):
    """Power flow did not converge; carries the final mismatch norm."""

    def __init__(self, message, mismatch=None, iterations=None):
        super().__init__(message)
        self.mismatch = mismatch
        self.iterations = iterations


class LinearSolverError(TssimError):
    """Structural or numerical singularity in the direct solve."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class StepFailure(TssimError):
    """Newton failed to converge within the iteration cap for one step.

    Carries the failing time and the StepStats recorded up to the failure so
    callers can report honestly instead of silently continuing.
    """

    def __init__(self, message, t=None, stats=None):
        super().__init__(message)
        self.t = t
        self.stats = stats
