"""Geodesic X-ray transform of even-rank symmetric tensors on the Poincare disk."""

__version__ = "0.1.0"
