"""Two-color ghost interference: wave simulation, photon statistics and fitting."""
__version__ = "0.1.0"
