"""Exception types shared across the package.

The CLI maps these onto its exit-code contract: validation problems exit
with 2, file/format problems with 3, numerical failures with 4.
"""


class ValidationError(ValueError):
    """Invalid argument, geometry mismatch, or violated precondition."""


class FormatError(ValueError):
    """Malformed or unrecognized on-disk file content."""


class NumericalError(RuntimeError):
    """A linear-algebra routine failed (singular system, no convergence)."""
