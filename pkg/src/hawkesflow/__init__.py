"""Bivariate marked Hawkes models of aggressive market order flow."""

__version__ = "0.1.0"
