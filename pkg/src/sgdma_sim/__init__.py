"""Discrete-event simulator of a scatter-gather DMA memory-to-stream path."""

__version__ = "0.1.0"
