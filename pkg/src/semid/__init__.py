"""Semantic function identification by observed program-state changes."""

__version__ = "0.1.0"
