"""Figure renderers for the simulation CLI's CSV/JSON artifacts.

Decoupled from the simulation package on purpose: the only contract is the
file schemas, so the simulation suite runs without any plotting stack
installed.
"""

from .readers import SchemaError, read_fit, read_table
from .figures import plot_decay, plot_radial, plot_sandwich, plot_shape

__version__ = "0.1.0"

__all__ = [
    "SchemaError",
    "plot_decay",
    "plot_radial",
    "plot_sandwich",
    "plot_shape",
    "read_fit",
    "read_table",
    "__version__",
]
