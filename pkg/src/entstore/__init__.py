"""Entanglement-coded content-addressed storage over a simulated peer cluster."""

__version__ = "0.1.0"
