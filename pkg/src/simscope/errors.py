"""Exception hierarchy shared across the package."""


class SimscopeError(Exception):
    """Base class for all errors raised by this package."""


class AssetError(SimscopeError):
    """Invalid or unresolvable asset (mesh, environment, texture)."""


class MeshParseError(AssetError):
    """Malformed mesh file; carries the offending line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SceneError(SimscopeError):
    """Scene state violates one of its invariants."""


class ControlError(SimscopeError):
    """Unknown control, bad parameter assignment, or failed application."""


class PolicyError(SimscopeError):
    """Search-space construction or policy contract violation."""


class BudgetError(PolicyError):
    """Enumeration would exceed the configured proposal budget."""


class RenderError(SimscopeError):
    """Renderer failure (unresolvable asset reference, bad state)."""


class ProtocolError(SimscopeError):
    """Malformed wire message, checksum mismatch, or framing error."""


class CapabilityError(ProtocolError):
    """Worker/renderer capabilities do not cover the experiment's needs."""


class ModelClientError(SimscopeError):
    """Model inference failed (timeout, bad response schema); records go
    to the errored bucket, not the incorrect one."""


class EvaluationError(SimscopeError):
    """Evaluator misuse (e.g. detection ground truth on empty mask)."""


class NotApplicableError(EvaluationError):
    """The task's correctness rule does not apply to this render (for
    example, detection with the object absent)."""


class ConfigError(SimscopeError):
    """Experiment config failed schema validation; message names the field."""


class OrchestratorError(SimscopeError):
    """Run-level failure (no workers registered, duplicate proposal ids)."""


class AnalysisError(SimscopeError):
    """Analysis precondition violated (empty input, unmatched ids, ...)."""
