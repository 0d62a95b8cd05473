"""Exact and heteroscedastic Gaussian-process models for noisy speed series."""

from .errors import ConfigurationError, DataError, HetGPError, NumericalError

__version__ = "0.1.0"

__all__ = ["ConfigurationError", "DataError", "HetGPError", "NumericalError", "__version__"]
