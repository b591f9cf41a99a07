"""Numerical laboratory for reaction-diffusion equations on the circle with
almost-periodic, reflection-symmetric forcing."""

__version__ = "0.1.0"
