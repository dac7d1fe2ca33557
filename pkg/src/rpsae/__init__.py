"""Representative period selection with autoencoders for capacity expansion planning."""

__version__ = "0.1.0"
