"""Exception hierarchy shared by the library and the CLI.

The CLI maps :class:`ValidationError` to exit status 1 and
:class:`NumericError` / :class:`ResourceError` to exit status 2.
"""


class VStatError(Exception):
    """Base class for all library errors."""


class ValidationError(VStatError, ValueError):
    """Bad arguments or an invalid configuration."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class UnsupportedKernelError(ValidationError):
    """The requested operation is not available for this kernel."""


class DegenerateKernelError(ValidationError):
    """The kernel has a vanishing Fourier transform (all sign masses zero)."""


class NumericError(VStatError, ArithmeticError):
    """A numerical routine failed to reach its documented tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ResourceError(VStatError, RuntimeError):
    """A cost guard was exceeded."""
