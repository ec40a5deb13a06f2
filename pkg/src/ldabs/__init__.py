"""Trace-driven adaptive-bitrate streaming with latent-diffusion semantic delivery."""

__version__ = "0.1.0"
