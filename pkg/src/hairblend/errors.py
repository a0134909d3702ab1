"""Exception types shared across the engine."""


class HairblendError(Exception):
    """Base class for engine errors."""


class ShapeMismatchError(HairblendError):
    """Operands disagree on resolution, stage, or channel count."""


class ValidationError(HairblendError):
    """Input violates a declared precondition or invariant."""


class StageError(HairblendError):
    """A pipeline stage failed; carries the stage name and any partial result."""

    def __init__(self, stage: str, message: str, partial=None):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.partial = partial
