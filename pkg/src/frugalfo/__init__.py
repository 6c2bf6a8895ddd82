"""Frugal distributed evaluation of first-order queries on networks."""

__version__ = "0.1.0"
