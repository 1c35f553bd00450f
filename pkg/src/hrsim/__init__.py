"""Simulator for Haag-Ruelle wavepacket preparation on digitized lattice scalar fields."""

__version__ = "0.1.0"
