"""Spectral coefficients of Dirac- and Laplace-type operators on flat tori."""

__version__ = "0.1.0"
