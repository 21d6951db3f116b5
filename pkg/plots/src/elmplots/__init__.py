"""Figure generation for elmfin run directories."""

__version__ = "0.1.0"
