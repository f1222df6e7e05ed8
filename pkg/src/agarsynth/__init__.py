"""agarsynth: synthetic Petri-dish dataset generation and evaluation."""

__version__ = "0.1.0"
