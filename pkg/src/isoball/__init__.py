"""Isoperimetric bounds for subsets of the unit-volume ball."""

__version__ = "0.1.0"
