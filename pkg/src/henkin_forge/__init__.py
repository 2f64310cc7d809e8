"""Henkin-style term models for first-order theories, checked at desk scale."""

__version__ = "0.1.0"
