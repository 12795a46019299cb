"""Dirac fields with MIT boundary conditions on deformed 1+1 spacetimes."""

__version__ = "0.1.0"
