"""Deterministic single-process FedADMM laboratory."""

__version__ = "0.1.0"
