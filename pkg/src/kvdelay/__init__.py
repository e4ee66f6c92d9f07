"""Numerical laboratory for the wave equation with Kelvin-Voigt damping,
dynamic boundary conditions and a delayed boundary feedback."""

__version__ = "0.1.0"
