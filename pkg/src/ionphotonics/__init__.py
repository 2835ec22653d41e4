"""Optics, trap and photon-budget models for a high-NA trapped-ion collection system."""

__version__ = "0.1.0"
