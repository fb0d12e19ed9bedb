"""Dual-downlink entanglement-based satellite QKD: link budget and finite-key length."""

__version__ = "0.1.0"
