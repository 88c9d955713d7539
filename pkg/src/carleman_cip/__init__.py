"""Carleman-weighted convex functional for a coefficient inverse problem of the wave equation."""

__version__ = "0.1.0"
