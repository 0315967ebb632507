"""Fourier-space simulation and verification tools for the spatially homogeneous
inelastic Boltzmann equation with moderately soft potentials."""

__version__ = "0.1.0"
