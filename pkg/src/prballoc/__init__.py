"""Patient-priority uplink PRB allocation for multi-cell OFDMA networks."""

__version__ = "0.1.0"
