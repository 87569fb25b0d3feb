"""Evolutionary power spectral density estimation with STFT, S-transform and CWT."""

__version__ = "0.1.0"
