"""Newtonian potentials of convex domains and growing-bubble solutions."""

__version__ = "0.1.0"
