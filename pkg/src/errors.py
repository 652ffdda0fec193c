from typing import Optional


class BenchError(Exception):
    """Base class for every error raised by the benchmark library"""


class TensorShapeError(BenchError, ValueError):
    """Incompatible extents, modes or factor shapes"""


class TensorFormatError(BenchError, ValueError):
    """Malformed tensor file"""

    def __init__(self, message: str, offset: Optional[int] = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class PreconditionerError(BenchError, ValueError):
    """Invalid linear preconditioner setup (zero diagonal, omega outside (0, 2))"""


class NumericalBreakdown(BenchError, ArithmeticError):
    """Non-finite values or nonpositive curvature"""


class MemoryResetRequired(BenchError):
    """The small quasi-Newton system is singular; stored pairs must be dropped"""


class LineSearchError(BenchError):
    """No acceptable step, even along the fallback direction"""


class CutLocusError(BenchError, ValueError):
    """Log map undefined: X^T Y is singular"""


class ConfigurationError(BenchError, ValueError):
    """Invalid experiment configuration"""
