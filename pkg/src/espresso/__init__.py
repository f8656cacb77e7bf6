"""Microarray experiment management: descriptions, layouts, quantification,
sign-test expression calls and relational rule mining."""

__version__ = "0.1.0"
