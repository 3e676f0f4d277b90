"""Monte Carlo lab for a lattice SIR epidemic and its first-passage representation."""

from .errors import ConfigError, EpishapeError, EstimationError, TruncationError
from .field import BoxField, FieldConfig, RecoveryDist
from .lattice import Box, Cone, OrientedBond, Slab

__version__ = "0.1.0"

__all__ = [
    "Box",
    "BoxField",
    "Cone",
    "ConfigError",
    "EpishapeError",
    "EstimationError",
    "FieldConfig",
    "OrientedBond",
    "RecoveryDist",
    "Slab",
    "TruncationError",
    "__version__",
]
