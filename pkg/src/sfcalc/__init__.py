"""Numerical S-functional calculus for Clifford-module operators."""
__version__ = "0.1.0"
