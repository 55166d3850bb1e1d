"""Channel-charting pilot reuse for multi-sector massive MIMO."""

__version__ = "0.1.0"
