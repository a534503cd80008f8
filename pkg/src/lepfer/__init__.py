"""Facial expression and action-unit recognition from local expression predictions."""

__version__ = "0.1.0"
