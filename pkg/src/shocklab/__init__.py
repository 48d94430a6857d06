"""Shock fluctuations in the asymmetric simple exclusion process.

Coupled simulation on a shared Poisson arrow field, the finite-M limit
distributions, and the statistics that compare the two.
"""

from .clocks import ClockEvent, Direction, MergedStream, SiteStream, derive_seed
from .dynamics import (
    CoupledEnsemble,
    CouplingCheck,
    LabeledConfiguration,
    SuppressionRegion,
    make_initial,
    shock_offset,
)
from .errors import ConfigurationError, NumericError, ShocklabError, UsageError

__version__ = "0.1.0"

__all__ = [
    "ClockEvent",
    "ConfigurationError",
    "CoupledEnsemble",
    "CouplingCheck",
    "Direction",
    "LabeledConfiguration",
    "MergedStream",
    "NumericError",
    "ShocklabError",
    "SiteStream",
    "SuppressionRegion",
    "UsageError",
    "derive_seed",
    "make_initial",
    "shock_offset",
]
