"""Exception types raised by gridloss.

Every error carries a machine-readable ``code`` so the command-line front end
can report failures as JSON without parsing messages.
"""


class GridLossError(Exception):
    code = "GRIDLOSS_ERROR"


class ShapeMismatch(GridLossError, ValueError):
    code = "SHAPE_MISMATCH"


class DomainError(GridLossError, ValueError):
    code = "DOMAIN_ERROR"


class NonFiniteOperand(GridLossError, ValueError):
    code = "NON_FINITE_OPERAND"


class InvalidAxis(GridLossError, ValueError):
    code = "INVALID_AXIS"


class PoolTooLarge(GridLossError, ValueError):
    code = "POOL_TOO_LARGE"


class MaskTooLarge(PoolTooLarge):
    code = "MASK_TOO_LARGE"


class NonScalarLoss(GridLossError, ValueError):
    code = "NON_SCALAR_LOSS"


class NonFiniteGradient(GridLossError, FloatingPointError):
    code = "NON_FINITE_GRADIENT"


class OutOfRange(GridLossError, ValueError):
    code = "OUT_OF_RANGE"


class RangeViolation(OutOfRange):
    code = "RANGE_VIOLATION"


class NonBinaryTruth(GridLossError, ValueError):
    code = "NON_BINARY_TRUTH"


class HardModeAsLoss(GridLossError, ValueError):
    code = "HARD_MODE_AS_LOSS"


class ClassOutOfRange(GridLossError, IndexError):
    code = "CLASS_OUT_OF_RANGE"


class MissingSupplementChannel(ShapeMismatch):
    code = "MISSING_SUPPLEMENT_CHANNEL"


class EmptyCombination(GridLossError, ValueError):
    code = "EMPTY_COMBINATION"


class InvalidSpec(GridLossError, ValueError):
    code = "INVALID_SPEC"


class ParseError(GridLossError, ValueError):
    code = "PARSE_ERROR"


class GradientBlockedLoss(GridLossError, RuntimeError):
    code = "GRADIENT_BLOCKED"

    def __init__(self, message, blocking_ops=()):
        super().__init__(message)
        self.blocking_ops = tuple(blocking_ops)


class DivergenceDetected(GridLossError, FloatingPointError):
    code = "DIVERGENCE"
