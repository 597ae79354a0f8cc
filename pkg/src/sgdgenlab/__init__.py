"""Constant-stepsize ridge SGD/ASGD laboratory for high-dimensional generalization."""

__version__ = "0.1.0"
