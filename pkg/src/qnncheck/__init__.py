"""Bit-precise safety verification for quantized feedforward networks."""

__version__ = "0.1.0"
