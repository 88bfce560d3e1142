"""Convergence laboratory for semidiscrete and fully discrete parabolic problems."""

__version__ = "0.1.0"
