"""Regularized kernel machines trained on dependent (mixing, AMS) data."""

__version__ = "0.1.0"
