"""EEG oscillatory markers for treatment-response prediction."""

__version__ = "0.1.0"
