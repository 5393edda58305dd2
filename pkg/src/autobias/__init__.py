"""Closed-loop bias tuning for simulated event cameras."""
__version__ = "0.1.0"
