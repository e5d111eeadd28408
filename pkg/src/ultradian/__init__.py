"""Simulation and bifurcation toolkit for a two-delay glucose-insulin model."""

__version__ = "0.1.0"
