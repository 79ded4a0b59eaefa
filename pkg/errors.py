"""Exception hierarchy shared by the kernels, agents and the CLI."""

from typing import Any, Dict, Optional, Tuple


class ToolkitError(Exception):
    """Base class for every error raised by the toolkit"""


class DimensionError(ToolkitError, ValueError):
    """Matrix or vector shapes do not fit the requested operation"""


class DomainError(ToolkitError, ValueError):
    """A parameter lies outside the precondition of an operation"""


class ResourceLimitError(ToolkitError):
    """A search or enumeration would exceed its configured limit"""

    def __init__(self, message: str, size: Optional[int] = None, limit: Optional[int] = None):
        super().__init__(message)
        self.size = size
        self.limit = limit


class SupportTooLargeError(ResourceLimitError):
    """Exact walk distribution refused; use fourier_estimate instead"""


class EnumerationCapError(ResourceLimitError):
    """GAP enumeration or membership search exceeds the state cap"""


class SearchBudgetError(ResourceLimitError):
    """Meet-in-the-middle relation search exceeds its budget"""


class RankOverflowError(ToolkitError):
    """The first inverse algorithm built a k-dissociated tuple of length d"""

    def __init__(self, message: str, word: Tuple[int, ...], extending: int):
        super().__init__(message)
        self.word = word
        self.extending = extending


class NonConvergenceError(ToolkitError):
    """Iterative singular value estimate did not converge"""

    def __init__(self, message: str, bracket: Tuple[float, float]):
        super().__init__(message)
        self.bracket = bracket


class DiscretizationError(ToolkitError):
    """Discretization could not produce a verified split"""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class NoAdmissibleScaleError(DiscretizationError):
    """No ladder rung avoided the magnitude set of the progression"""


class KernelSearchExhaustedError(DiscretizationError, ResourceLimitError):
    """Kernel relation search ran out of budget before stabilizing"""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        DiscretizationError.__init__(self, message, diagnostics)
        self.size = None
        self.limit = None


class DiscretizationVerificationError(DiscretizationError):
    """Every candidate split failed verification"""
