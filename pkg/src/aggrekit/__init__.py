"""Nonlocal aggregation-diffusion equations: analysis of kernels, mild
solutions and pseudospectral simulation on periodic boxes."""

__version__ = "0.1.0"
