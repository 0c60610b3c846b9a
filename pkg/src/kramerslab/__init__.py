"""Numerical laboratory for metastable transition times of overdamped diffusions."""

__version__ = "0.1.0"
