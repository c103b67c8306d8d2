"""Heralded single-photon source with multiplexed heralding: rate equations and Monte Carlo."""

__version__ = "0.1.0"
