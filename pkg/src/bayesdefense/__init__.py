"""Bayesian security games for component-based systems."""

__version__ = "0.1.0"
