"""Exception types shared across the package."""


class MixclustError(Exception):
    """Base class for all mixclust errors."""


class InputError(MixclustError, ValueError):
    """Invalid argument, violated precondition, or malformed input data."""


class TableRangeError(MixclustError, IndexError):
    """A log-gamma table lookup fell outside the tabulated range."""


class InferenceError(MixclustError, RuntimeError):
    """A consistency check failed during inference (bookkeeping bug or
    degenerate numerical state)."""
