"""Voice activity detection for 20 Hz badge amplitude streams."""
__version__ = "0.1.0"
