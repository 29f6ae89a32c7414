"""Exception types shared across the package."""


class InputFormatError(ValueError):
    """Raised when an input file or array does not match the documented layout."""


class DegenerateNullError(RuntimeError):
    """Raised when a null variance collapses to zero and no z-score exists."""


class InfeasibleGraphError(ValueError):
    """Raised when a graph construction round cannot connect the remaining values."""


class FamilyTooLargeError(RuntimeError):
    """Raised when explicit graph-family enumeration would exceed the safety cap."""


class VerificationError(RuntimeError):
    """Raised when a cross-check between independent computation routes disagrees."""
