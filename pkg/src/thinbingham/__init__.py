"""Numerical homogenization laboratory for Bingham flow in thin porous media."""

__version__ = "0.1.0"
