"""Entanglement witnesses and their local measurement decompositions."""

__version__ = "0.1.0"
