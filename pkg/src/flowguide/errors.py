"""Exception types raised across the package."""


class FlowGuideError(Exception):
    """Base class for package errors."""

    kind = "error"


class InvalidSpecError(FlowGuideError, ValueError):
    kind = "invalid-spec"


class UnknownLabelError(FlowGuideError, KeyError):
    kind = "unknown-label"


class DegenerateMarginalError(FlowGuideError, ArithmeticError):
    kind = "degenerate-marginal"


class ZeroDenominatorError(FlowGuideError, ZeroDivisionError):
    kind = "division-by-zero"


class InvalidParameterError(FlowGuideError, ValueError):
    kind = "invalid-parameter"


class InsufficientPointsError(FlowGuideError, ValueError):
    kind = "insufficient-points"


class DegenerateFitError(FlowGuideError, ValueError):
    kind = "degenerate-fit"


class InsufficientSeedsError(FlowGuideError, ValueError):
    kind = "insufficient-seeds"


class NonFiniteStateError(FlowGuideError, FloatingPointError):
    """Raised when integration produces a non-finite state."""

    kind = "non-finite-state"

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"non-finite state at step {step}")


class ConfigError(FlowGuideError):
    """Invalid run configuration; carries every violation found."""

    kind = "config-error"

    def __init__(self, violations, kind=None):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        if kind is not None:
            self.kind = kind
        super().__init__("; ".join(self.violations))
