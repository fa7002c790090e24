"""Conductivity reconstruction from interior power-density data."""

__version__ = "0.1.0"
