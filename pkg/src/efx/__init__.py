"""Executable checks for explanation functions on finite discrete domains."""

__version__ = "0.1.0"
