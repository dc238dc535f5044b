"""Discrete absorbing-state diffusion for non-autoregressive text generation."""

__version__ = "0.1.0"
