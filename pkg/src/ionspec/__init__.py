"""Spectroscopy of trapped-ion Ising simulators: couplings, probes, spectra and witnesses."""

__version__ = "0.1.0"
