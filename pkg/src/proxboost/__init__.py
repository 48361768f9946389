"""Gradient and (accelerated) proximal boosting with regression trees."""

__version__ = "0.1.0"
