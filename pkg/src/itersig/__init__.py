"""Iterated sums and integrals of bounded paths, with large-deviation rate tools."""
__version__ = "0.1.0"
