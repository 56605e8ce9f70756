"""Incremental-quantity distance protection with grid-forming inverters."""

__version__ = "0.1.0"
