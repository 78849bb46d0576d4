"""Generalized POVMs and quantum testers on sections of state spaces."""

from .config import Tolerances, set_tolerances, tolerances
from . import linalg, sections, psdgeo

__all__ = ["Tolerances", "set_tolerances", "tolerances", "linalg", "sections",
           "psdgeo"]
__version__ = "0.1.0"
