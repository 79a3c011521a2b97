from typing import Optional


class HeavyTailError(Exception):
    """Base class for every error raised by the package."""


class BadConfig(HeavyTailError, ValueError):
    """A parameter is outside its documented range."""


class InsufficientSample(HeavyTailError):
    """The sample has fewer observations than the requested number of blocks."""


class DegenerateSample(HeavyTailError):
    """All centered block sums vanish, e.g. constant data."""


class SampleFormatError(HeavyTailError):
    def __init__(self, message: str, path: Optional[str] = None, line_number: Optional[int] = None):
        self.path = path
        self.line_number = line_number
        location = ""
        if path is not None:
            location = f"{path}:{line_number}: " if line_number is not None else f"{path}: "
        super().__init__(f"{location}{message}")


class FitError(HeavyTailError):
    """Not enough usable points for a least-squares fit."""


class NumericOverflow(HeavyTailError):
    """A value the statistic depends on left the float64 range."""
