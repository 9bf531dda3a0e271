"""Numerical Finsler geometry: metrics, tensor calculus, flows, audits."""

__version__ = "0.1.0"
