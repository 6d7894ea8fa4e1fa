"""Lossy planar cavity: resonances, loss channels and quantum-state input-output map."""

__version__ = "0.1.0"
