"""Penalized least-squares selection over nested models, with FDR bounds and K calibration."""

__version__ = "0.1.0"
