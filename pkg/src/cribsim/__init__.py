"""Semiclassical simulator of photon-echo quantum memories based on controlled
reversible inhomogeneous broadening, plus a model of the repeater link they serve."""

__version__ = "0.1.0"
