"""Exact master-equation machinery for two Brownian oscillators in a common bath."""
__version__ = "0.1.0"
