"""Simulation and statistics for idle information leakage in qubit arrays."""

__version__ = "0.1.0"
