"""Synthetic Chinese scene-character generation and CNN recognition."""

__version__ = "0.1.0"
