"""Numerical laboratory for principal nests of unimodal maps."""
__version__ = "0.1.0"
