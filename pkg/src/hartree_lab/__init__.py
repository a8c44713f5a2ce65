"""Radial numerics for two-bubble dynamics of the energy-critical Hartree equation."""
__version__ = "0.1.0"
