"""Exact-arithmetic engine for the tautological ring of moduli of curves."""

__version__ = "0.1.0"
