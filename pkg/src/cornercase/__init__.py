"""Search-based generation of high-risk intersection scenarios."""

__version__ = "0.1.0"
