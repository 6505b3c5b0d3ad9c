"""Truncated Fock-space simulator for coherent and number-diagonal descriptions of optical experiments."""

__version__ = "0.1.0"
