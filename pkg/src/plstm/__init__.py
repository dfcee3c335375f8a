"""Skeleton-based action recognition with part-aware LSTMs."""

__version__ = "0.1.0"
