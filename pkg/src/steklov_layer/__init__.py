"""Steklov eigenvalues as limits of Neumann problems with mass concentrated in a thin boundary layer."""
__version__ = "0.1.0"
