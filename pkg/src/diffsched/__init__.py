"""Discrete-event simulation of deadline-aware image/video diffusion co-serving."""

__version__ = "0.1.0"
