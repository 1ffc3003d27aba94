"""Finite-truncation multi-index regularity structure and model for the
quasi-linear equation (d_2 - d_1^2) u = a(u) d_1^2 u + xi on the torus."""

__version__ = "0.1.0"
