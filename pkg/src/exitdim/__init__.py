"""Exit times, walk dimensions and spectral diagnostics on discrete approximations of fractals."""

__version__ = "0.1.0"
