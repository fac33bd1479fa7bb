"""Integer-forcing architectures for compression-based uplink C-RAN."""

__version__ = "0.1.0"
