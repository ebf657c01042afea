"""Simulation library for representation learning on synthetic rating data."""

from .core import (
    GenreStructure,
    LatentState,
    RatingSample,
    ValidityReport,
    derive_stream,
    lipschitz_transfer_bound,
    norm_error,
)
from .exceptions import LatentLabError

__version__ = "0.1.0"

__all__ = [
    "GenreStructure",
    "LatentState",
    "RatingSample",
    "ValidityReport",
    "derive_stream",
    "lipschitz_transfer_bound",
    "norm_error",
    "LatentLabError",
    "__version__",
]
