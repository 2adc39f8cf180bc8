"""Polar coding for binary-input block fading channels."""

__version__ = "0.1.0"
