"""Exception hierarchy for pwavg.

Every error carries a stable dotted ``code`` (used in CLI diagnostics) and the
process exit code the CLI maps it to.
"""

from typing import Any, Dict, Optional

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
EXIT_USAGE = 64


class PwavgError(Exception):
    """Base class for all pwavg errors."""
    code: str = "pwavg.error"
    exit_code: int = EXIT_RUNTIME

    def __init__(self, message: str, code: Optional[str] = None, **details: Any):
        super().__init__(message)
        self.message = message
        if code is not None:
            self.code = code
        self.details: Dict[str, Any] = details

    def to_dict(self) -> Dict[str, Any]:
        payload = {"code": self.code, "message": self.message}
        payload.update(self.details)
        return payload


class ValidationError(PwavgError, ValueError):
    """Input documents or expressions that do not validate."""
    code = "validation"
    exit_code = EXIT_VALIDATION


class UsageError(PwavgError, ValueError):
    code = "usage"
    exit_code = EXIT_USAGE


# Expression language

class ExprError(ValidationError):
    code = "expr.error"


class ExprSyntaxError(ExprError):
    code = "expr.syntax"

    def __init__(self, message: str, offset: int, expected: Optional[str] = None, source: str = ""):
        super().__init__(message, offset=offset, expected=expected, source=source)
        self.offset = offset
        self.expected = expected


class UnknownFunctionError(ExprError):
    code = "expr.unknown_function"


class UnknownSymbolError(ExprError):
    code = "expr.unknown_symbol"


class UnboundVariableError(ExprError):
    code = "expr.unbound"


class ExprDomainError(PwavgError, ArithmeticError):
    """Evaluation left the domain of an operation (log(0), 1/0, ...)."""
    code = "expr.domain"

    def __init__(self, message: str, subexpression: str):
        super().__init__(message, subexpression=subexpression)
        self.subexpression = subexpression


# Model

class ModelError(ValidationError):
    code = "model.schema"


class DimensionMismatchError(ModelError):
    code = "model.dimension"


class DuplicateSignatureError(ModelError):
    code = "zone.duplicate_signature"


class ZoneOverlapError(ModelError):
    code = "zone.overlap"


class MissingManifoldError(ModelError):
    code = "model.no_manifold"


class NoZoneError(PwavgError):
    """A probed point matches no zone signature."""
    code = "zone.uncovered"


# Flow

class FlowError(PwavgError):
    code = "flow.error"

    def __init__(self, message: str, event: Any = None, **details: Any):
        if event is not None:
            details.setdefault("t", float(event.t))
            details.setdefault("x", [float(v) for v in event.x])
            details.setdefault("surface", event.surface)
        super().__init__(message, **details)
        self.event = event


class SlidingEncountered(FlowError):
    code = "flow.sliding"


class TangencyEncountered(FlowError):
    code = "flow.tangency"


class CornerEncountered(FlowError):
    code = "flow.corner"


class RegularValueError(FlowError):
    code = "flow.regular_value"


class MaxEventsExceeded(FlowError):
    code = "flow.max_events"


class MaxStepsExceeded(FlowError):
    code = "flow.max_steps"


class StepSizeUnderflow(FlowError):
    code = "flow.step_underflow"


# Averaging / degree / shooting

class PeriodicityViolation(PwavgError):
    code = "averaging.periodicity"


class DegreeError(PwavgError):
    code = "degree.margin"


class UnresolvedWindingError(DegreeError):
    code = "degree.unresolved"


class NewtonFailure(PwavgError):
    code = "shooting.newton"


class SingularJacobianError(NewtonFailure):
    code = "shooting.singular_jacobian"
