"""Numerical laboratory for mean-field games and their probabilistic toolchain."""

__version__ = "0.1.0"
