"""Exception types shared across osclab."""


class ValidationError(ValueError):
    """An argument or input violates a documented precondition."""


class KernelDefectError(ValueError):
    """A kernel evaluator returned a non-finite value on a support pair."""

    def __init__(self, message, pair=None):
        super().__init__(message)
        self.pair = pair


class ChainViolationError(RuntimeError):
    """A constant-chain inequality failed beyond tolerance.

    This always indicates a bug (or corrupted input), never a property of the
    function being analysed, so it is raised rather than clamped.
    """

    def __init__(self, message, violations=None):
        super().__init__(message)
        self.violations = violations or []


class UsageError(ValueError):
    """Invalid experiment configuration; ``field`` names the offending key."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field
