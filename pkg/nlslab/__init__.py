"""Numerical laboratory for the focusing mass-critical NLS with radial data."""

__version__ = "1.0.0"
