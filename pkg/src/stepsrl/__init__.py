"""Speech-text entangled spoken-word representations, from the tensor up."""

__version__ = "0.1.0"
