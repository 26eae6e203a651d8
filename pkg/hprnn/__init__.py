"""Horizontal-product recurrent network with parametric biases."""

__version__ = "0.1.0"
