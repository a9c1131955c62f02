"""Autoregressive normalizing flows on skeleton graphs for 3D motion data."""

__version__ = "0.1.0"
