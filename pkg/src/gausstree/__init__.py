"""Boundedness criteria and Monte Carlo verification for Gaussian sums on trees."""
__version__ = "0.1.0"
