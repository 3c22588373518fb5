"""Truncated-Wigner simulation of two condensates pumped by entangled photon pairs."""

__version__ = "0.1.0"
