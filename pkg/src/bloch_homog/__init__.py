"""Threshold homogenization of periodic factorized operators via Floquet-Bloch fibers."""

from .effective import EffectiveData, compute_effective
from .gallery import GalleryEntry
from .lattice import Lattice
from .model import MatrixSymbol, OperatorModel, validate

__all__ = ["EffectiveData", "GalleryEntry", "Lattice", "MatrixSymbol", "OperatorModel",
           "compute_effective", "validate"]
__version__ = "0.1.0"
