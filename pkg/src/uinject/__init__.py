"""Robust power allocation by training neural networks with injected uncertainty."""

__version__ = "0.1.0"
