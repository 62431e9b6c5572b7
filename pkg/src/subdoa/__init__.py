"""DOA estimation for a partially calibrated hearing-aid array.

Subspace (MUSIC) and RTF-vector-matching direction-of-arrival estimation
with least-squares completion of prototype transfer-function sets, plus a
shoebox scene simulator and a benchmark harness for the three array
conditions (H/H, H+E/H, H+E/H+E).
"""

__version__ = "0.1.0"

from .backend import backend_name
from .errors import (
    DegenerateAlpha,
    DegenerateReference,
    FormatError,
    IllConditioned,
    InvalidInput,
    NumericalFailure,
    SubdoaError,
)

__all__ = [
    "__version__",
    "backend_name",
    "SubdoaError",
    "InvalidInput",
    "NumericalFailure",
    "IllConditioned",
    "DegenerateReference",
    "DegenerateAlpha",
    "FormatError",
]
