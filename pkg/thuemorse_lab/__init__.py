"""
Thue-Morse Lab
Numerics for the Thue-Morse Schrodinger operator: spectrum approximations, trace-map
dynamics, energy classification, growth rates, matrix limit laws and subordinacy indicators.
"""

from .dynamics import EnergyClass, classify_energy, find_typed_energy, hunt_energy, hunt_gamma
from .errors import ThueMorseError
from .numerics import PrecisionReal, ScaledMat2, as_precision
from .spectrum import sigma_bands, spectrum_approx, type1_energies
from .tracemap import trace_seq

__version__ = "1.0.0"

__all__ = [
    "EnergyClass",
    "PrecisionReal",
    "ScaledMat2",
    "ThueMorseError",
    "as_precision",
    "classify_energy",
    "find_typed_energy",
    "hunt_energy",
    "hunt_gamma",
    "sigma_bands",
    "spectrum_approx",
    "trace_seq",
    "type1_energies",
]
