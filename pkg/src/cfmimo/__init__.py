"""Cell-free mmWave massive MIMO with capacity-limited fronthaul and low-resolution converters."""

__version__ = "0.1.0"
