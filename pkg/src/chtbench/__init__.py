"""Constraint-handling techniques for evolutionary constrained optimization, with a DE engine and benchmark harness."""

__version__ = "0.1.0"
