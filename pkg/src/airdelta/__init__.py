"""Paired-year air-quality change mapping.

Aligns two years of daily station measurements by ISO week and weekday,
models the log-ratio of the aligned concentrations with fixed effects plus
a separable AR(1)-in-time / Matern-in-space Gaussian field, and produces
weekly meteorology-normalized relative-change maps with credible intervals.
"""

from airdelta.errors import ConfigError, DataError, NumericalError

__version__ = "0.1.0"

__all__ = ["ConfigError", "DataError", "NumericalError", "__version__"]
