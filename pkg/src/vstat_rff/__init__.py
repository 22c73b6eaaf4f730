"""Maximal V-statistics of dependent data via random Fourier features."""

__version__ = "0.1.0"

from .errors import (DegenerateKernelError, NumericError, ResourceError,  # noqa: F401
                     UnsupportedKernelError, ValidationError, VStatError)
from .kernels import make_kernel, mollify  # noqa: F401
