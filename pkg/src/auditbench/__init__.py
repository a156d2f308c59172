"""Simulation benchmark for the reliability of external fairness audits under restricted data access."""

__version__ = "0.1.0"
