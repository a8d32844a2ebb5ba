"""Aperiodic duty-cycle poling design for spectrally separable SPDC biphotons."""

__version__ = "0.1.0"
