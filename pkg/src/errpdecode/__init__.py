"""Error-related potential decoding from multichannel EEG-like recordings."""

__version__ = "0.1.0"
