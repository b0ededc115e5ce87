"""Quantum dynamics of trilinear (pump, signal, idler) parametric down-conversion."""
__version__ = "0.1.0"
