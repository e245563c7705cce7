"""Penalized selection over hyperbolic Haar wavelet pyramids.

Estimates densities, copula densities, Poisson intensities and Levy jump
intensities on a box from point data.
"""

__version__ = "0.1.0"

from .frameworks import CoefficientTable, FrameworkData, empirical_coefficients, ingest
from .hyperbolic import Domain, IndexLayout, WaveletIndex
from .pyramid_models import PyramidModel, SparsitySchedule
from .selection import EstimateResult, PenaltyConfig, select_pyramid
from .uniwavelet import HaarBasis, UniIndex, UnivariateBasis

__all__ = [
    "CoefficientTable",
    "Domain",
    "EstimateResult",
    "FrameworkData",
    "HaarBasis",
    "IndexLayout",
    "PenaltyConfig",
    "PyramidModel",
    "SparsitySchedule",
    "UniIndex",
    "UnivariateBasis",
    "WaveletIndex",
    "empirical_coefficients",
    "ingest",
    "select_pyramid",
]
