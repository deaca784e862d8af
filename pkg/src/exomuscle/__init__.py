"""Numerical model of a semi-rigid tendon-driven knee assist device."""

__version__ = "0.1.0"
