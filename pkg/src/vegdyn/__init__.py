"""Simulation and numerical analysis of spatial K-state vegetation models."""

__version__ = "0.1.0"
