"""Interlocking-directorate networks versus stock-market co-movement."""

__version__ = "0.1.0"
