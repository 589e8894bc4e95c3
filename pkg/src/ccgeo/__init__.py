"""Exact and numerical tools for smooth distributions and anisotropic metrics."""

__version__ = "0.1.0"
