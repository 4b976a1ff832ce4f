"""Simulation, neural denoising and progression analysis of 24-2 visual fields."""

__version__ = "0.1.0"
