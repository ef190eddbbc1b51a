"""Matern GP regression with general nu, loss-landscape exploration and ensembles."""

__version__ = "0.1.0"
