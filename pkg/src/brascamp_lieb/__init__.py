"""Analysis tools for Brascamp–Lieb data."""

__version__ = "0.1.0"
