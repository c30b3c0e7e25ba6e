"""Inverse-probability-weighted matrix completion under low-rank missingness."""

__version__ = "0.1.0"
