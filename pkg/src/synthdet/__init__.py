"""Synthetic training data for part detection."""

__version__ = "0.1.0"
