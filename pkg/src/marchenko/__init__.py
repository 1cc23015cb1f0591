"""Marchenko inverse scattering for the Morse potential on the half line.

Modules: ``morse`` (direct problem), ``specfun`` (Riemann-Siegel theta and
related functions), ``quadrature``, ``kernel`` (Marchenko kernel),
``inversion`` (Nystrom solution) and ``cli``.
"""
from .errors import MarchenkoError
from .morse import MorseModel

__all__ = ["MarchenkoError", "MorseModel"]
__version__ = "0.1.0"
