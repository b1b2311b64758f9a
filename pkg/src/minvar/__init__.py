"""Minimum variance portfolio construction with learned eigenvalue shrinkage."""

__version__ = "0.1.0"
