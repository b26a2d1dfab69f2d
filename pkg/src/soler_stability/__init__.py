"""Spectral stability numerics for Soler-type nonlinear Dirac solitary waves."""

__version__ = "0.1.0"
