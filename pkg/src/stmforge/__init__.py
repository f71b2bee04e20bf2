"""Synthetic STM degradation, generative restoration samplers and evaluation metrics."""

__version__ = "0.1.0"
