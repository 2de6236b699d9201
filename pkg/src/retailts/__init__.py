"""Retail sales forecasting, copula dependence models and Bayesian regression."""

__version__ = "0.1.0"
