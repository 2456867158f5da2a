"""Engineered dissipative reservoirs for GHZ-state stabilization."""

__version__ = "0.1.0"
