"""Learned elastoplasticity: Sobolev-trained energies, level-set yield functions
and implicit return mapping in principal axes."""

__version__ = "0.1.0"
