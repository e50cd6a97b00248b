"""Disentangled conditional-prior VAE for label-conditional text generation."""

__version__ = "0.1.0"
