"""Geometric graph transformer for inter-chain residue contact prediction."""

__version__ = "0.1.0"
