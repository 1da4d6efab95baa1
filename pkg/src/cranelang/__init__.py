"""Curiosity-driven co-development of action and language in a simulated crane robot."""

__version__ = "0.1.0"
