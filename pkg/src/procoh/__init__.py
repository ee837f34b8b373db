"""Continuous mod-p cohomology of p-adic analytic groups via fusion-stable spectral sequences."""

__version__ = "0.1.0"
