"""Two-stage robust oxygen distribution under demand uncertainty."""

__version__ = "0.1.0"
