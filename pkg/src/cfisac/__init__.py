"""Passive sensing simulator for cell-free radio access networks.

Distributed radio units (RRUs) transmit fingerprint-bearing downlink signals;
receiving RRUs cancel the known signals, attribute the remaining reflected
paths to their transmitters by RF fingerprint, and localize the reflectors.
"""
from .kernels import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
