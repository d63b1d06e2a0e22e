"""Exact diagonalization and mean-field tools for a cavity-coupled Hubbard chain."""

__version__ = "0.1.0"
