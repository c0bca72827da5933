"""Pseudorandom-unitary correlator images and a small CNN that classifies them."""

__version__ = "0.1.0"
