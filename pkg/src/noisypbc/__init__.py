"""Noisy prediction-based control for scalar maps."""

__version__ = "0.1.0"
