"""Spectral simulation and verification lab for the MGT equation with memory."""

__version__ = "1.0.0"
