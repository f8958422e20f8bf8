"""ringlab: a numerical laboratory for single-ring spectra.

Compute the limiting eigenvalue law of bi-unitarily invariant matrix
ensembles from their singular-value distribution, simulate the ensembles,
and compare prediction against empirical spectra.
"""

from .measures import Measure1D

__version__ = "0.1.0"

__all__ = ["Measure1D", "__version__"]
