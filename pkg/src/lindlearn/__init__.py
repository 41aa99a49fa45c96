"""Learning Lindblad dissipation from observation time series."""
__version__ = "0.1.0"
