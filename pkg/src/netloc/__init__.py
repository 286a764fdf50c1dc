"""Locate node and line disturbances in networks of diffusively coupled agents."""

__version__ = "0.1.0"
