"""Bit-plane XOR triggers and scan-swapping backdoors for visual state-space models."""

__version__ = "0.1.0"
